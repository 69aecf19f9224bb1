#include "conprox/trace.hpp"

#include <fstream>
#include <iomanip>
#include <ostream>
#include <stdexcept>

namespace conprox {

void ConvergenceTrace::write(std::ostream& os, bool zero_time) const {
  os << "iter\tobjective\tfidelity\tregularizer\tstep\trho\ttime_ms\n";
  os << std::setprecision(17);
  for (const auto& r : rows) {
    os << r.iter << '\t' << r.objective << '\t' << r.fidelity << '\t' << r.regularizer << '\t' << r.step
       << '\t' << r.rho << '\t' << (zero_time ? 0.0 : r.time_ms) << '\n';
  }
}

void ConvergenceTrace::write(const std::filesystem::path& path, bool zero_time) const {
  std::ofstream os(path);
  if (!os) throw std::runtime_error("cannot open " + path.string() + " for writing");
  write(os, zero_time);
}

}  // namespace conprox
