#include "table.hpp"

#include <algorithm>
#include <charconv>
#include <cmath>
#include <limits>
#include <fstream>
#include <sstream>

namespace twophase {

namespace {

std::vector<std::string> split_csv_line(const std::string& line, long line_no,
                                        const std::string& source) {
  std::vector<std::string> fields;
  std::string cur;
  bool quoted = false;
  for (size_t i = 0; i < line.size(); ++i) {
    const char c = line[i];
    if (quoted) {
      if (c == '"') {
        if (i + 1 < line.size() && line[i + 1] == '"') {
          cur += '"';
          ++i;
        } else {
          quoted = false;
        }
      } else {
        cur += c;
      }
    } else if (c == '"' && cur.empty()) {
      quoted = true;
    } else if (c == ',') {
      fields.push_back(cur);
      cur.clear();
    } else if (c != '\r') {
      cur += c;
    }
  }
  if (quoted)
    throw Error(ErrorCode::schema, source + " row " + std::to_string(line_no) +
                                       ": unterminated quote");
  fields.push_back(cur);
  return fields;
}

double parse_double(const std::string& s, long line_no, const std::string& col,
                    const std::string& source) {
  double v = 0.0;
  const char* begin = s.data();
  const char* end = s.data() + s.size();
  const auto [ptr, ec] = std::from_chars(begin, end, v);
  if (ec != std::errc() || ptr != end)
    throw Error(ErrorCode::schema, source + " row " + std::to_string(line_no) + ": column '" +
                                       col + "' is not a number: '" + s + "'");
  return v;
}

long parse_long(const std::string& s, long line_no, const std::string& col,
                const std::string& source) {
  long v = 0;
  const auto [ptr, ec] = std::from_chars(s.data(), s.data() + s.size(), v);
  if (ec != std::errc() || ptr != s.data() + s.size())
    throw Error(ErrorCode::schema, source + " row " + std::to_string(line_no) + ": column '" +
                                       col + "' is not an integer: '" + s + "'");
  return v;
}

}  // namespace

std::string format_double(double v) {
  char buf[64];
  const auto res = std::to_chars(buf, buf + sizeof(buf), v);
  return std::string(buf, res.ptr);
}

InputTable parse_input_table(std::istream& in, const std::string& source_name) {
  std::string line;
  if (!std::getline(in, line))
    throw Error(ErrorCode::schema, source_name + ": empty file, header row required");
  const auto header = split_csv_line(line, 1, source_name);

  int col_id = -1, col_time = -1, col_status = -1, col_stratum = -1, col_sampled = -1,
      col_pi = -1;
  std::vector<int> z_cols, aux_cols;
  InputTable table;
  for (int c = 0; c < static_cast<int>(header.size()); ++c) {
    const std::string& name = header[static_cast<size_t>(c)];
    if (name == "id") col_id = c;
    else if (name == "time") col_time = c;
    else if (name == "status") col_status = c;
    else if (name == "stratum") col_stratum = c;
    else if (name == "sampled") col_sampled = c;
    else if (name == "pi") col_pi = c;
    else if (name.rfind("z.", 0) == 0) {
      z_cols.push_back(c);
      table.z_names.push_back(name);
    } else if (name.rfind("aux.", 0) == 0) {
      aux_cols.push_back(c);
      table.aux_names.push_back(name);
    } else {
      throw Error(ErrorCode::schema,
                  source_name + ": unknown column '" + name +
                      "' (expected id/time/status/stratum/sampled/pi/z.*/aux.*)");
    }
  }
  for (const auto& [col, name] :
       std::vector<std::pair<int, const char*>>{{col_id, "id"},
                                                {col_time, "time"},
                                                {col_status, "status"},
                                                {col_stratum, "stratum"},
                                                {col_sampled, "sampled"}})
    if (col < 0)
      throw Error(ErrorCode::schema, source_name + ": missing required column '" +
                                         std::string(name) + "'");
  if (z_cols.empty())
    throw Error(ErrorCode::schema, source_name + ": at least one z.* column required");

  std::vector<double> times;
  std::vector<int> status;
  std::vector<std::vector<double>> zrows;
  long line_no = 1;
  while (std::getline(in, line)) {
    ++line_no;
    if (line.empty()) continue;
    const auto fields = split_csv_line(line, line_no, source_name);
    if (fields.size() != header.size())
      throw Error(ErrorCode::schema, source_name + " row " + std::to_string(line_no) + ": " +
                                         std::to_string(fields.size()) + " fields, expected " +
                                         std::to_string(header.size()));
    auto field = [&](int c) -> const std::string& { return fields[static_cast<size_t>(c)]; };

    PhaseOneRecord rec;
    if (field(col_id).empty())
      throw Error(ErrorCode::schema,
                  source_name + " row " + std::to_string(line_no) + ": id is empty");
    if (field(col_stratum).empty() || field(col_sampled).empty())
      throw Error(ErrorCode::schema, source_name + " row " + std::to_string(line_no) +
                                         ": stratum and sampled may never be empty");
    rec.stratum = static_cast<int>(parse_long(field(col_stratum), line_no, "stratum", source_name));
    const long sampled = parse_long(field(col_sampled), line_no, "sampled", source_name);
    if (sampled != 0 && sampled != 1)
      throw Error(ErrorCode::schema, source_name + " row " + std::to_string(line_no) +
                                         ": sampled must be 0 or 1");
    rec.sampled = sampled == 1;
    rec.subject_id = static_cast<long>(table.ids.size());

    double t = 0.0;
    int st = 0;
    std::vector<double> z(z_cols.size(), 0.0);
    if (rec.sampled) {
      if (field(col_time).empty() || field(col_status).empty())
        throw Error(ErrorCode::schema, source_name + " row " + std::to_string(line_no) +
                                           ": sampled row with empty time or status");
      t = parse_double(field(col_time), line_no, "time", source_name);
      st = static_cast<int>(parse_long(field(col_status), line_no, "status", source_name));
      if (t < 0.0 || (st != 0 && st != 1))
        throw Error(ErrorCode::schema, source_name + " row " + std::to_string(line_no) +
                                           ": time must be >= 0 and status 0 or 1");
      for (size_t k = 0; k < z_cols.size(); ++k) {
        if (field(z_cols[k]).empty())
          throw Error(ErrorCode::schema, source_name + " row " + std::to_string(line_no) +
                                             ": sampled row with empty " + table.z_names[k]);
        z[k] = parse_double(field(z_cols[k]), line_no, table.z_names[k], source_name);
      }
    } else {
      if (!field(col_time).empty())
        t = parse_double(field(col_time), line_no, "time", source_name);
      if (!field(col_status).empty())
        st = static_cast<int>(parse_long(field(col_status), line_no, "status", source_name));
      if (t < 0.0 || (st != 0 && st != 1))
        throw Error(ErrorCode::schema, source_name + " row " + std::to_string(line_no) +
                                           ": time must be >= 0 and status 0 or 1");
      for (size_t k = 0; k < z_cols.size(); ++k)
        if (!field(z_cols[k]).empty())
          z[k] = parse_double(field(z_cols[k]), line_no, table.z_names[k], source_name);
    }

    if (col_pi >= 0 && !field(col_pi).empty()) {
      rec.known_pi = parse_double(field(col_pi), line_no, "pi", source_name);
      if (!(rec.known_pi > 0.0) || rec.known_pi > 1.0)
        throw Error(ErrorCode::schema, source_name + " row " + std::to_string(line_no) +
                                           ": pi must lie in (0,1]");
    }
    if (!aux_cols.empty()) {
      rec.aux.resize(static_cast<Eigen::Index>(aux_cols.size()));
      for (size_t k = 0; k < aux_cols.size(); ++k)
        rec.aux[static_cast<Eigen::Index>(k)] =
            field(aux_cols[k]).empty()
                ? std::numeric_limits<double>::quiet_NaN()
                : parse_double(field(aux_cols[k]), line_no, table.aux_names[k], source_name);
    }

    table.ids.push_back(field(col_id));
    table.records.push_back(std::move(rec));
    times.push_back(t);
    status.push_back(st);
    zrows.push_back(std::move(z));
  }
  if (table.ids.empty())
    throw Error(ErrorCode::schema, source_name + ": no data rows");

  const Eigen::Index n = static_cast<Eigen::Index>(table.ids.size());
  const Eigen::Index p = static_cast<Eigen::Index>(z_cols.size());
  table.cohort.times.resize(n);
  table.cohort.status.resize(n);
  table.cohort.covariates.resize(n, p);
  table.cohort.weights = Eigen::VectorXd::Zero(n);
  for (Eigen::Index i = 0; i < n; ++i) {
    table.cohort.times[i] = times[static_cast<size_t>(i)];
    table.cohort.status[i] = status[static_cast<size_t>(i)];
    for (Eigen::Index j = 0; j < p; ++j)
      table.cohort.covariates(i, j) = zrows[static_cast<size_t>(i)][static_cast<size_t>(j)];
  }
  return table;
}

InputTable load_input_table(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw Error(ErrorCode::io, "cannot open data file '" + path + "'");
  return parse_input_table(in, path);
}

std::string format_input_table_csv(const InputTable& table, bool blank_unsampled_z) {
  std::ostringstream os;
  os << "id,stratum,sampled,time,status";
  const bool any_pi = std::any_of(table.records.begin(), table.records.end(),
                                  [](const PhaseOneRecord& r) { return std::isfinite(r.known_pi); });
  if (any_pi) os << ",pi";
  for (const auto& name : table.aux_names) os << "," << name;
  for (const auto& name : table.z_names) os << "," << name;
  os << "\n";

  for (size_t i = 0; i < table.records.size(); ++i) {
    const auto& rec = table.records[i];
    const Eigen::Index ei = static_cast<Eigen::Index>(i);
    os << table.ids[i] << "," << rec.stratum << "," << (rec.sampled ? 1 : 0);
    os << "," << format_double(table.cohort.times[ei]);
    os << "," << table.cohort.status[ei];
    if (any_pi) os << "," << (std::isfinite(rec.known_pi) ? format_double(rec.known_pi) : "");
    for (Eigen::Index k = 0; k < static_cast<Eigen::Index>(table.aux_names.size()); ++k)
      os << ","
         << (k < rec.aux.size() && std::isfinite(rec.aux[k]) ? format_double(rec.aux[k]) : "");
    for (Eigen::Index j = 0; j < table.cohort.covariates.cols(); ++j) {
      os << ",";
      if (!blank_unsampled_z || rec.sampled) os << format_double(table.cohort.covariates(ei, j));
    }
    os << "\n";
  }
  return os.str();
}

}  // namespace twophase
