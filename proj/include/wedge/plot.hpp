#pragma once

#include <string>
#include <vector>

#include "wedge/evaluator.hpp"
#include "wedge/features.hpp"

namespace wedge::plot {

struct BarSeries {
  std::string name;
  std::vector<double> values;  // one per category, in [0, 1]
};

/// Grouped vertical bars, values shown as percentages.
std::string bar_chart(const std::string& title, const std::vector<std::string>& categories,
                      const std::vector<BarSeries>& series);

/// Accuracy per visualization kind (top-1 and top-5 bars).
std::string viz_sweep_chart(const std::vector<std::pair<std::string, EvalReport>>& runs);

/// Per-class top-1 dots over frequency bins with the bin means as bars.
std::string frequency_chart(const FrequencyBinReport& report);

/// One bar group per training combination, one bar per test provenience.
std::string transfer_chart(const TransferMatrix& matrix);

/// Cells coloured by top-1 change (percentage points), with supports and
/// the projected cell normal drawn as an arrow.
std::string grid_heatmap(const GridReport& report);

enum class ColorBy { Class, Provenience };

/// 2D projection scatter, one colour per class or provenience.
std::string scatter(const EmbeddingSet& embeddings, const Projection2D& projection, ColorBy color_by);

/// Same, from the rows of a projection CSV.
struct ScatterPoint {
  std::string id, sign_class, provenience;
  double x = 0, y = 0;
};
std::string scatter(const std::vector<ScatterPoint>& points, ColorBy color_by, const std::string& title = "t-SNE");

std::vector<ScatterPoint> read_projection_csv(const std::filesystem::path& path);

/// Writes `svg`, creating parent directories.
void write_svg(const std::filesystem::path& path, const std::string& svg);

}  // namespace wedge::plot
