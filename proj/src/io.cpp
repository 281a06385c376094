#include "ssnst/io.hpp"

#include <algorithm>
#include <charconv>
#include <cmath>
#include <fstream>
#include <limits>
#include <set>
#include <sstream>
#include <unordered_map>

#include <json.hpp>

#include "ssnst/error.hpp"

namespace ssnst {

namespace {

using json = nlohmann::json;
constexpr double kNaN = std::numeric_limits<double>::quiet_NaN();

std::vector<std::string> split_line(const std::string& line) {
  std::vector<std::string> out;
  std::string cell;
  std::istringstream ss(line);
  while (std::getline(ss, cell, ',')) {
    const auto b = cell.find_first_not_of(" \t");
    const auto e = cell.find_last_not_of(" \t\r");
    out.push_back(b == std::string::npos ? "" : cell.substr(b, e - b + 1));
  }
  if (!line.empty() && line.back() == ',') out.emplace_back();
  return out;
}

std::ofstream open_out(const std::string& path) {
  std::ofstream out(path);
  if (!out) fail(ErrorCode::IoError, "cannot write " + path);
  return out;
}

std::string where(const CsvTable& t, std::size_t row, std::size_t col) {
  return t.path + ":" + std::to_string(t.lines[row]) + ":" + std::to_string(col + 1);
}

std::vector<std::string> covariate_columns(const CsvTable& t, const std::set<std::string>& reserved) {
  std::vector<std::string> out;
  for (const auto& h : t.header)
    if (!reserved.contains(h)) out.push_back(h);
  return out;
}

}  // namespace

std::optional<std::size_t> CsvTable::find(std::string_view name) const {
  const auto it = std::find(header.begin(), header.end(), name);
  if (it == header.end()) return std::nullopt;
  return static_cast<std::size_t>(it - header.begin());
}

std::size_t CsvTable::column(std::string_view name) const {
  const auto c = find(name);
  if (!c) fail(ErrorCode::SchemaError, path + ": missing column '" + std::string(name) + "'");
  return *c;
}

bool CsvTable::blank(std::size_t row, std::size_t col) const { return rows[row][col].empty(); }

double CsvTable::number(std::size_t row, std::size_t col) const {
  const std::string& s = rows[row][col];
  double v = 0.0;
  const auto [ptr, ec] = std::from_chars(s.data(), s.data() + s.size(), v);
  if (s.empty() || ec != std::errc() || ptr != s.data() + s.size())
    fail(ErrorCode::ParseError, where(*this, row, col) + ": expected a number, got '" + s + "'");
  return v;
}

int CsvTable::integer(std::size_t row, std::size_t col) const {
  const std::string& s = rows[row][col];
  int v = 0;
  const auto [ptr, ec] = std::from_chars(s.data(), s.data() + s.size(), v);
  if (s.empty() || ec != std::errc() || ptr != s.data() + s.size())
    fail(ErrorCode::ParseError, where(*this, row, col) + ": expected an integer, got '" + s + "'");
  return v;
}

CsvTable read_csv(const std::string& path) {
  std::ifstream in(path);
  if (!in) fail(ErrorCode::IoError, "cannot open " + path);
  CsvTable t;
  t.path = path;
  std::string line;
  std::size_t lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    if (line.empty() || line == "\r") continue;
    auto cells = split_line(line);
    if (t.header.empty()) {
      t.header = std::move(cells);
      continue;
    }
    if (cells.size() != t.header.size())
      fail(ErrorCode::ParseError, path + ":" + std::to_string(lineno) + ":1: expected " +
                                      std::to_string(t.header.size()) + " fields, got " +
                                      std::to_string(cells.size()));
    t.rows.push_back(std::move(cells));
    t.lines.push_back(lineno);
  }
  if (t.header.empty()) fail(ErrorCode::SchemaError, path + ": file is empty");
  return t;
}

std::string format_double(double v) {
  if (std::isnan(v)) return "";
  char buf[64];
  const auto [ptr, ec] = std::to_chars(buf, buf + sizeof buf, v);
  return std::string(buf, ptr);
}

std::vector<Segment> read_network_json(const std::string& path) {
  std::ifstream in(path);
  if (!in) fail(ErrorCode::IoError, "cannot open " + path);
  json j;
  try {
    in >> j;
  } catch (const json::parse_error& e) {
    fail(ErrorCode::ParseError, path + ": " + e.what());
  }
  if (!j.contains("segments") || !j["segments"].is_array())
    fail(ErrorCode::SchemaError, path + ": missing 'segments' array");
  std::vector<Segment> segs;
  for (const auto& s : j["segments"]) {
    for (const char* key : {"id", "parent_id", "length", "watershed_area", "seg_contrib_area"})
      if (!s.contains(key)) fail(ErrorCode::SchemaError, path + ": segment without '" + std::string(key) + "'");
    try {
      Segment seg;
      seg.id = s["id"].get<int>();
      if (!s["parent_id"].is_null()) seg.parent_id = s["parent_id"].get<int>();
      seg.length = s["length"].get<double>();
      seg.watershed_area = s["watershed_area"].get<double>();
      seg.seg_contrib_area = s["seg_contrib_area"].get<double>();
      segs.push_back(seg);
    } catch (const json::exception& e) {
      fail(ErrorCode::ParseError, path + ": " + e.what());
    }
  }
  return segs;
}

void write_network_json(const std::string& path, std::span<const Segment> segments) {
  json arr = json::array();
  for (const auto& s : segments)
    arr.push_back({{"id", s.id},
                   {"parent_id", s.parent_id ? json(*s.parent_id) : json(nullptr)},
                   {"length", s.length},
                   {"watershed_area", s.watershed_area},
                   {"seg_contrib_area", s.seg_contrib_area}});
  auto out = open_out(path);
  out << json{{"segments", arr}}.dump(2) << '\n';
}

std::vector<Site> read_sites_csv(const std::string& path) {
  const CsvTable t = read_csv(path);
  const auto cid = t.column("site_id"), cseg = t.column("segment_id"), cup = t.column("updist"),
             cx = t.column("x"), cy = t.column("y");
  std::vector<Site> sites;
  for (std::size_t r = 0; r < t.rows.size(); ++r)
    sites.push_back({t.integer(r, cid), t.integer(r, cseg), t.number(r, cup), t.number(r, cx), t.number(r, cy)});
  return sites;
}

void write_sites_csv(const std::string& path, std::span<const Site> sites) {
  auto out = open_out(path);
  out << "site_id,segment_id,updist,x,y\n";
  for (const auto& s : sites)
    out << s.site_id << ',' << s.segment_id << ',' << format_double(s.updist) << ',' << format_double(s.x) << ','
        << format_double(s.y) << '\n';
}

CovariateTable ObservationTable::covariate_table() const { return {site_ids, times, covariates}; }

ObservationTable ObservationTable::reordered(std::span<const int> ids) const {
  std::unordered_map<int, Eigen::Index> pos;
  for (std::size_t i = 0; i < site_ids.size(); ++i) pos[site_ids[i]] = static_cast<Eigen::Index>(i);
  if (ids.size() != site_ids.size()) fail(ErrorCode::DimensionMismatch, "site list does not match observations");
  std::vector<Eigen::Index> rows;
  for (int id : ids) {
    const auto it = pos.find(id);
    if (it == pos.end()) fail(ErrorCode::DanglingReference, "site " + std::to_string(id) + " has no observations");
    rows.push_back(it->second);
  }
  ObservationTable out = *this;
  out.site_ids.assign(ids.begin(), ids.end());
  for (std::size_t i = 0; i < rows.size(); ++i) {
    const auto r = static_cast<Eigen::Index>(i);
    out.y.row(r) = y.row(rows[i]);
    out.observed.row(r) = observed.row(rows[i]);
    for (auto& [name, m] : out.covariates) m.row(r) = covariates.at(name).row(rows[i]);
  }
  return out;
}

ObservationTable read_observations_csv(const std::string& path) {
  const CsvTable t = read_csv(path);
  if (t.rows.empty()) fail(ErrorCode::SchemaError, path + ": no observation rows");
  const auto cid = t.column("site_id"), ct = t.column("t"), cy = t.column("y");
  ObservationTable o;
  o.covariate_names = covariate_columns(t, {"site_id", "t", "y"});

  std::unordered_map<int, Eigen::Index> spos;
  std::set<int> times;
  for (std::size_t r = 0; r < t.rows.size(); ++r) {
    const int id = t.integer(r, cid);
    if (!spos.contains(id)) {
      spos[id] = static_cast<Eigen::Index>(o.site_ids.size());
      o.site_ids.push_back(id);
    }
    times.insert(t.integer(r, ct));
  }
  o.times.assign(times.begin(), times.end());
  std::unordered_map<int, Eigen::Index> tpos;
  for (std::size_t i = 0; i < o.times.size(); ++i) tpos[o.times[i]] = static_cast<Eigen::Index>(i);

  const auto S = static_cast<Eigen::Index>(o.site_ids.size());
  const auto T = static_cast<Eigen::Index>(o.times.size());
  o.y = Eigen::MatrixXd::Constant(S, T, kNaN);
  o.observed = BoolMatrix::Constant(S, T, false);
  BoolMatrix seen = BoolMatrix::Constant(S, T, false);
  for (const auto& name : o.covariate_names) o.covariates[name] = Eigen::MatrixXd::Constant(S, T, kNaN);

  for (std::size_t r = 0; r < t.rows.size(); ++r) {
    const auto s = spos.at(t.integer(r, cid));
    const auto k = tpos.at(t.integer(r, ct));
    if (seen(s, k)) fail(ErrorCode::ParseError, where(t, r, ct) + ": duplicate (site_id, t) row");
    seen(s, k) = true;
    if (!t.blank(r, cy)) {
      o.y(s, k) = t.number(r, cy);
      o.observed(s, k) = true;
    }
    for (const auto& name : o.covariate_names) {
      const auto c = t.column(name);
      if (t.blank(r, c))
        fail(ErrorCode::CovariateMissing, where(t, r, c) + ": covariate '" + name + "' is empty");
      o.covariates[name](s, k) = t.number(r, c);
    }
  }
  for (Eigen::Index s = 0; s < S; ++s)
    for (Eigen::Index k = 0; k < T; ++k)
      if (!seen(s, k))
        fail(ErrorCode::CovariateMissing, path + ": no row for site " + std::to_string(o.site_ids[static_cast<std::size_t>(s)]) +
                                              " at t=" + std::to_string(o.times[static_cast<std::size_t>(k)]));
  return o;
}

void write_observations_csv(const std::string& path, const ObservationTable& o) {
  auto out = open_out(path);
  out << "site_id,t,y";
  for (const auto& n : o.covariate_names) out << ',' << n;
  out << '\n';
  for (std::size_t s = 0; s < o.site_ids.size(); ++s)
    for (std::size_t k = 0; k < o.times.size(); ++k) {
      const auto si = static_cast<Eigen::Index>(s), ki = static_cast<Eigen::Index>(k);
      out << o.site_ids[s] << ',' << o.times[k] << ',' << (o.observed(si, ki) ? format_double(o.y(si, ki)) : "");
      for (const auto& n : o.covariate_names) out << ',' << format_double(o.covariates.at(n)(si, ki));
      out << '\n';
    }
}

CovariateTable PredictionSites::covariate_table() const {
  CovariateTable c;
  for (const auto& s : sites) c.site_ids.push_back(s.site_id);
  c.times = times;
  c.columns = covariates;
  return c;
}

PredictionSites read_prediction_sites_csv(const std::string& path) {
  const CsvTable t = read_csv(path);
  if (t.rows.empty()) fail(ErrorCode::SchemaError, path + ": no prediction rows");
  const auto cid = t.column("site_id"), cseg = t.column("segment_id"), cup = t.column("updist"),
             cx = t.column("x"), cy = t.column("y"), ct = t.column("t");
  PredictionSites p;
  p.covariate_names = covariate_columns(t, {"site_id", "segment_id", "updist", "x", "y", "t"});
  std::unordered_map<int, Eigen::Index> spos;
  std::set<int> times;
  for (std::size_t r = 0; r < t.rows.size(); ++r) {
    const int id = t.integer(r, cid);
    if (!spos.contains(id)) {
      spos[id] = static_cast<Eigen::Index>(p.sites.size());
      p.sites.push_back({id, t.integer(r, cseg), t.number(r, cup), t.number(r, cx), t.number(r, cy)});
    }
    times.insert(t.integer(r, ct));
  }
  p.times.assign(times.begin(), times.end());
  std::unordered_map<int, Eigen::Index> tpos;
  for (std::size_t i = 0; i < p.times.size(); ++i) tpos[p.times[i]] = static_cast<Eigen::Index>(i);
  const auto P = static_cast<Eigen::Index>(p.sites.size());
  const auto T = static_cast<Eigen::Index>(p.times.size());
  for (const auto& name : p.covariate_names) p.covariates[name] = Eigen::MatrixXd::Constant(P, T, kNaN);
  BoolMatrix seen = BoolMatrix::Constant(P, T, false);
  for (std::size_t r = 0; r < t.rows.size(); ++r) {
    const auto s = spos.at(t.integer(r, cid));
    const auto k = tpos.at(t.integer(r, ct));
    if (seen(s, k)) fail(ErrorCode::ParseError, where(t, r, ct) + ": duplicate (site_id, t) row");
    seen(s, k) = true;
    for (const auto& name : p.covariate_names) {
      const auto c = t.column(name);
      if (t.blank(r, c)) fail(ErrorCode::CovariateMissing, where(t, r, c) + ": covariate '" + name + "' is empty");
      p.covariates[name](s, k) = t.number(r, c);
    }
  }
  if (!seen.all()) fail(ErrorCode::CovariateMissing, path + ": every prediction site needs a row per time");
  return p;
}

void write_prediction_sites_csv(const std::string& path, const PredictionSites& p) {
  auto out = open_out(path);
  out << "site_id,segment_id,updist,x,y,t";
  for (const auto& n : p.covariate_names) out << ',' << n;
  out << '\n';
  for (std::size_t s = 0; s < p.sites.size(); ++s)
    for (std::size_t k = 0; k < p.times.size(); ++k) {
      const auto& site = p.sites[s];
      out << site.site_id << ',' << site.segment_id << ',' << format_double(site.updist) << ','
          << format_double(site.x) << ',' << format_double(site.y) << ',' << p.times[k];
      for (const auto& n : p.covariate_names)
        out << ',' << format_double(p.covariates.at(n)(static_cast<Eigen::Index>(s), static_cast<Eigen::Index>(k)));
      out << '\n';
    }
}

void write_matrix_csv(const std::string& path, std::span<const std::string> header, const Eigen::MatrixXd& m) {
  if (static_cast<Eigen::Index>(header.size()) != m.cols())
    fail(ErrorCode::DimensionMismatch, "header does not match the matrix width");
  auto out = open_out(path);
  for (std::size_t j = 0; j < header.size(); ++j) out << (j ? "," : "") << header[j];
  out << '\n';
  for (Eigen::Index i = 0; i < m.rows(); ++i) {
    for (Eigen::Index j = 0; j < m.cols(); ++j) out << (j ? "," : "") << format_double(m(i, j));
    out << '\n';
  }
}

Eigen::MatrixXd read_matrix_csv(const std::string& path, std::vector<std::string>* header) {
  const CsvTable t = read_csv(path);
  Eigen::MatrixXd m(static_cast<Eigen::Index>(t.rows.size()), static_cast<Eigen::Index>(t.header.size()));
  for (std::size_t r = 0; r < t.rows.size(); ++r)
    for (std::size_t c = 0; c < t.header.size(); ++c)
      m(static_cast<Eigen::Index>(r), static_cast<Eigen::Index>(c)) = t.blank(r, c) ? kNaN : t.number(r, c);
  if (header) *header = t.header;
  return m;
}

void write_text(const std::string& path, const std::string& text) {
  auto out = open_out(path);
  out << text;
}

std::string read_text(const std::string& path) {
  std::ifstream in(path);
  if (!in) fail(ErrorCode::IoError, "cannot open " + path);
  std::ostringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

}  // namespace ssnst
