#pragma once

#include <chrono>
#include <cstddef>
#include <filesystem>
#include <iosfwd>
#include <vector>

namespace conprox {

struct TraceRow {
  std::size_t iter = 0;
  double objective = 0.0;
  double fidelity = 0.0;
  double regularizer = 0.0;
  double step = 0.0;
  double rho = 0.0;
  double time_ms = 0.0;
  double primal_residual = 0.0;  // ADMM only; not part of the exported columns
  double dual_residual = 0.0;
};

/// Per-iteration record. Exported as tab-separated text with the fixed column order
/// iter, objective, fidelity, regularizer, step, rho, time_ms.
struct ConvergenceTrace {
  std::vector<TraceRow> rows;

  bool empty() const { return rows.empty(); }
  const TraceRow& back() const { return rows.back(); }
  double final_objective() const { return rows.empty() ? 0.0 : rows.back().objective; }

  /// With `zero_time` the time column is written as 0 so repeated runs produce identical bytes.
  void write(std::ostream& os, bool zero_time = false) const;
  void write(const std::filesystem::path& path, bool zero_time = false) const;
};

class Stopwatch {
 public:
  Stopwatch() : start_(std::chrono::steady_clock::now()) {}
  double elapsed_ms() const {
    return std::chrono::duration<double, std::milli>(std::chrono::steady_clock::now() - start_).count();
  }

 private:
  std::chrono::steady_clock::time_point start_;
};

}  // namespace conprox
