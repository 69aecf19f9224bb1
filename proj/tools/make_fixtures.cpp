// Writes the small synthetic fixtures shipped in data/.
#include <filesystem>
#include <iostream>

#include "conprox/bench.hpp"

int main(int argc, char** argv) {
  const std::filesystem::path dir = argc > 1 ? argv[1] : "data";
  std::filesystem::create_directories(dir / "train");
  std::filesystem::create_directories(dir / "test");
  const auto train = conprox::synthetic_images(64, 5, 11);
  const auto test = conprox::synthetic_images(64, 5, 12);
  for (std::size_t k = 0; k < 5; ++k) {
    conprox::write_pgm(dir / "train" / ("img" + std::to_string(k) + ".pgm"), train.signal(k), 64, 64);
    conprox::write_pgm(dir / "test" / ("img" + std::to_string(k) + ".pgm"), test.signal(k), 64, 64);
  }
  const auto series = conprox::synthetic_series(6, 2048, 3, 5, 1024);
  conprox::write_series_csv(dir / "sensors.csv", series.table);
  std::cout << "injected windows:";
  for (const auto& w : series.injected) std::cout << " [" << w.begin << ", " << w.end << ")";
  std::cout << '\n';
}
