#pragma once

#include <filesystem>
#include <span>
#include <string>
#include <string_view>

#include "twinflow/autodiff.hpp"

namespace twinflow::svg {

// Scatter plot of the first two columns. Points are colored by label when
// labels are given (one per row).
std::string scatter(const Matrix& points, std::span<const int> labels = {}, std::string_view title = {});

void write_scatter(const std::filesystem::path& path, const Matrix& points, std::span<const int> labels = {},
                   std::string_view title = {});

}  // namespace twinflow::svg
