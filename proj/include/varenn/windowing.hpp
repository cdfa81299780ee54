#pragma once

#include <array>
#include <cstddef>
#include <optional>
#include <vector>

#include "varenn/climate.hpp"

namespace varenn {

/// A training period immediately followed by a labeling period, in whole years.
struct WindowSpec {
    int start_month_index = 0;  ///< always a multiple of 12
    int training_years = 30;
    int labeling_years = 10;

    int start_year_index() const { return start_month_index / 12; }
    int training_end_month() const { return start_month_index + 12 * training_years; }
    int labeling_end_month() const { return training_end_month() + 12 * labeling_years; }
    int span_years() const { return training_years + labeling_years; }

    friend bool operator==(const WindowSpec&, const WindowSpec&) = default;
};

/// Windows starting at years 0, 1, 2, ... that fit in n_years.
/// Throws DomainError when n_years < training_years + labeling_years.
std::vector<WindowSpec> enumerate_windows(int n_years, int training_years = 30, int labeling_years = 10);

enum class LabelFamily { T, P };

struct LabelCategory {
    int ordinal = 3;  ///< 1..5, 1 = largest rise
    LabelFamily family = LabelFamily::T;

    /// 0-based class index used by the classifier.
    int class_index() const { return ordinal - 1; }
    friend bool operator==(const LabelCategory&, const LabelCategory&) = default;
};

/// Lower bounds of categories 1..4 (category 5 is everything below the last).
/// Lower bounds are inclusive; thresholds must be strictly decreasing.
struct LabelThresholds {
    std::array<double, 4> lower_bounds{};

    static LabelThresholds temperature() { return {{5.0, 2.5, 0.0, -2.5}}; }
    static LabelThresholds precipitation() { return {{30.0, 10.0, -10.0, -30.0}}; }
};

LabelCategory label_delta(double delta, LabelFamily family, const LabelThresholds& thresholds);
/// F_T: T1 >= 5, T2 [2.5, 5), T3 [0, 2.5), T4 [-2.5, 0), T5 < -2.5 (°C).
LabelCategory label_tmp(double delta);
/// F_P: P1 >= 30, P2 [10, 30), P3 [-10, 10), P4 [-30, -10), P5 < -30 (mm mo⁻¹).
LabelCategory label_pre(double delta);

struct TrendDelta {
    double mu30 = 0.0;  ///< mean over the training period
    double mu10 = 0.0;  ///< mean over the labeling period
    double delta = 0.0; ///< mu10 - mu30
};

/// Means of the monthly target values over both periods. Returns nullopt
/// (the window is excluded) if any value in either period is missing.
std::optional<TrendDelta> trend_delta(const ClimateCube& cube, std::size_t cell, VariableId target,
                                      const WindowSpec& window);

}  // namespace varenn
