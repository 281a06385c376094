#include "ssnst/cli.hpp"

int main(int argc, char** argv) { return ssnst::run_cli(argc, argv); }
