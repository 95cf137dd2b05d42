#pragma once

#include <filesystem>
#include <iosfwd>
#include <string>
#include <vector>

namespace moo {

struct PiPoint {
  std::string model;
  double x_moo = 0.0;        // squared-loss MOO risk
  double y_criterion = 0.0;  // MOORT or MOOEN risk
  std::string criterion;
};

/// model,x_moo,y_criterion,criterion; `comment` is written first as "# ..."
/// when non-empty.
void write_pi_points(std::ostream& out, const std::vector<PiPoint>& points,
                     const std::string& comment = "");

/// 800x600 scatter of the points whose criterion equals `criterion`.
/// Coincident markers get their labels stacked downward.
std::string render_pi_svg(const std::vector<PiPoint>& points, const std::string& criterion,
                          const std::string& comment = "");

/// Writes pi_points.csv and one pi_diagram_<criterion>.svg per distinct
/// criterion into `dir`. Returns the files written.
std::vector<std::filesystem::path> emit_pi_diagram(const std::vector<PiPoint>& points,
                                                   const std::filesystem::path& dir,
                                                   const std::string& comment = "");

}  // namespace moo
