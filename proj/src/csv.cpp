#include "anytime/csv.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <limits>
#include <sstream>
#include <stdexcept>

namespace anytime::harness {

std::string format_double(double v) {
  char buf[64];
  std::snprintf(buf, sizeof buf, "%.12g", v);
  return buf;
}

std::string format_u64(uint64_t v) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "%llu", static_cast<unsigned long long>(v));
  return buf;
}

void write_csv(const std::string& path, const Csv& csv) {
  std::ofstream f(path, std::ios::binary);
  if (!f) throw std::runtime_error("write_csv: cannot open " + path);
  for (const auto& [k, v] : csv.metadata) f << "# " << k << ": " << v << "\n";
  for (size_t i = 0; i < csv.header.size(); ++i)
    f << csv.header[i] << (i + 1 == csv.header.size() ? "" : ",");
  f << "\n";
  for (const auto& row : csv.rows) {
    if (row.size() != csv.header.size())
      throw std::invalid_argument("write_csv: row width != header width");
    for (size_t i = 0; i < row.size(); ++i)
      f << row[i] << (i + 1 == row.size() ? "" : ",");
    f << "\n";
  }
  if (!f) throw std::runtime_error("write_csv: write failed: " + path);
}

namespace {

std::vector<std::string> split_commas(const std::string& line) {
  std::vector<std::string> out;
  std::string cur;
  for (char c : line) {
    if (c == ',') {
      out.push_back(cur);
      cur.clear();
    } else {
      cur.push_back(c);
    }
  }
  out.push_back(cur);
  return out;
}

}  // namespace

Csv read_csv(const std::string& path) {
  std::ifstream f(path, std::ios::binary);
  if (!f) throw std::runtime_error("read_csv: cannot open " + path);
  Csv csv;
  std::string line;
  bool have_header = false;
  while (std::getline(f, line)) {
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (line.empty()) continue;
    if (line[0] == '#') {
      std::string body = line.substr(1);
      if (!body.empty() && body[0] == ' ') body.erase(0, 1);
      const auto colon = body.find(": ");
      if (colon == std::string::npos)
        csv.metadata.emplace_back(body, "");
      else
        csv.metadata.emplace_back(body.substr(0, colon),
                                  body.substr(colon + 2));
      continue;
    }
    if (!have_header) {
      csv.header = split_commas(line);
      have_header = true;
    } else {
      auto row = split_commas(line);
      if (row.size() != csv.header.size())
        throw std::runtime_error("read_csv: ragged row in " + path);
      csv.rows.push_back(std::move(row));
    }
  }
  if (!have_header) throw std::runtime_error("read_csv: missing header: " + path);
  return csv;
}

double clopper_pearson_upper(uint64_t errors, uint64_t trials, double alpha) {
  if (trials == 0) throw std::invalid_argument("clopper_pearson_upper: no trials");
  if (errors > trials)
    throw std::invalid_argument("clopper_pearson_upper: errors > trials");
  if (errors == trials) return 1.0;
  const double target = std::log(alpha / 2.0);
  const double n = static_cast<double>(trials);

  // log P(X <= errors) for X ~ Bin(trials, p), via log-sum-exp over the
  // exact terms; decreasing in p, so bisection finds the bound.
  std::vector<double> logc(errors + 1);
  logc[0] = 0.0;
  for (uint64_t i = 1; i <= errors; ++i)
    logc[i] = logc[i - 1] + std::log((n - static_cast<double>(i) + 1.0) /
                                     static_cast<double>(i));
  auto log_cdf = [&](double p) {
    const double lp = std::log(p), lq = std::log1p(-p);
    double maxt = -std::numeric_limits<double>::infinity();
    for (uint64_t i = 0; i <= errors; ++i)
      maxt = std::max(maxt, logc[i] + static_cast<double>(i) * lp +
                                (n - static_cast<double>(i)) * lq);
    double s = 0.0;
    for (uint64_t i = 0; i <= errors; ++i)
      s += std::exp(logc[i] + static_cast<double>(i) * lp +
                    (n - static_cast<double>(i)) * lq - maxt);
    return maxt + std::log(s);
  };

  double lo = static_cast<double>(errors) / n;  // CDF >= 1/2 here
  double hi = 1.0;
  for (int it = 0; it < 80; ++it) {
    const double mid = 0.5 * (lo + hi);
    if (mid <= 0.0 || mid >= 1.0) break;
    if (log_cdf(mid) > target)
      lo = mid;
    else
      hi = mid;
  }
  return 0.5 * (lo + hi);
}

LineFit least_squares(std::span<const double> x, std::span<const double> y) {
  if (x.size() != y.size() || x.size() < 2)
    throw std::invalid_argument("least_squares: need >= 2 matched points");
  const double n = static_cast<double>(x.size());
  double sx = 0, sy = 0, sxx = 0, sxy = 0;
  for (size_t i = 0; i < x.size(); ++i) {
    sx += x[i];
    sy += y[i];
    sxx += x[i] * x[i];
    sxy += x[i] * y[i];
  }
  const double denom = n * sxx - sx * sx;
  if (denom == 0) throw std::invalid_argument("least_squares: degenerate x");
  LineFit f;
  f.slope = (n * sxy - sx * sy) / denom;
  f.intercept = (sy - f.slope * sx) / n;
  return f;
}

}  // namespace anytime::harness
