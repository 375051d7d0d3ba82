#include "cascadeseg/ptsio.hpp"

#include <cstdio>
#include <fstream>
#include <sstream>
#include <stdexcept>

namespace cseg {

LandmarkSet load_pts(const std::string& path) {
  std::ifstream is(path);
  if (!is) throw std::runtime_error("load_pts: cannot open " + path);

  std::string token;
  int version = 0;
  if (!(is >> token) || token != "version:" || !(is >> version))
    throw std::runtime_error("load_pts: missing version header in " + path);
  long n_points = 0;
  if (!(is >> token) || token != "n_points:" || !(is >> n_points))
    throw std::runtime_error("load_pts: missing n_points header in " + path);
  if (n_points != kNumLandmarks)
    throw std::runtime_error("load_pts: unsupported point count " + std::to_string(n_points) +
                             " in " + path);
  if (!(is >> token) || token != "{")
    throw std::runtime_error("load_pts: missing opening brace in " + path);

  LandmarkSet lm;
  for (int k = 0; k < kNumLandmarks; ++k) {
    double x = 0.0, y = 0.0;
    if (!(is >> x >> y))
      throw std::runtime_error("load_pts: truncated point list in " + path);
    lm.xy(k, 0) = x;
    lm.xy(k, 1) = y;
  }
  if (!(is >> token) || token != "}")
    throw std::runtime_error("load_pts: missing closing brace in " + path);
  validate_landmarks(lm);
  return lm;
}

void save_pts(const std::string& path, const LandmarkSet& lm) {
  validate_landmarks(lm);
  std::ofstream os(path);
  if (!os) throw std::runtime_error("save_pts: cannot open " + path);
  os << "version: 1\n";
  os << "n_points: " << kNumLandmarks << "\n";
  os << "{\n";
  char line[128];
  for (int k = 0; k < kNumLandmarks; ++k) {
    std::snprintf(line, sizeof(line), "%.17g %.17g\n", lm.xy(k, 0), lm.xy(k, 1));
    os << line;
  }
  os << "}\n";
  if (!os) throw std::runtime_error("save_pts: write failed for " + path);
}

}  // namespace cseg
