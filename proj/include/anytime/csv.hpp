#pragma once

#include <cstdint>
#include <span>
#include <string>
#include <utility>
#include <vector>

namespace anytime::harness {

// Campaign output format: `# key: value` metadata lines (emitted in the given
// order), a comma-separated header row, then data rows. Cells never contain
// commas or newlines, so no quoting is needed. Writing is byte-deterministic:
// numbers are preformatted by the caller via format_double/format_u64.
struct Csv {
  std::vector<std::pair<std::string, std::string>> metadata;
  std::vector<std::string> header;
  std::vector<std::vector<std::string>> rows;
};

void write_csv(const std::string& path, const Csv& csv);
Csv read_csv(const std::string& path);

// Shortest-ish fixed formatting used everywhere numbers reach output files;
// %.12g keeps every value this library produces stable across runs.
std::string format_double(double v);
std::string format_u64(uint64_t v);

// Exact one-sided Clopper-Pearson upper confidence bound for a binomial
// proportion (the 1 - alpha/2 bound of the central two-sided interval).
double clopper_pearson_upper(uint64_t errors, uint64_t trials,
                             double alpha = 0.05);

struct LineFit {
  double slope = 0;
  double intercept = 0;
};
LineFit least_squares(std::span<const double> x, std::span<const double> y);

}  // namespace anytime::harness
