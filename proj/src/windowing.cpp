#include "varenn/windowing.hpp"

#include <cmath>
#include <string>

#include "varenn/error.hpp"

namespace varenn {

std::vector<WindowSpec> enumerate_windows(int n_years, int training_years, int labeling_years) {
    if (training_years < 1 || labeling_years < 1)
        throw DomainError("training and labeling periods must be at least one year");
    const int span = training_years + labeling_years;
    if (n_years < span)
        throw DomainError("time series of " + std::to_string(n_years) + " years is shorter than the " +
                          std::to_string(span) + "-year window");
    std::vector<WindowSpec> out;
    out.reserve(static_cast<std::size_t>(n_years - span + 1));
    for (int y = 0; y + span <= n_years; ++y) out.push_back({12 * y, training_years, labeling_years});
    return out;
}

LabelCategory label_delta(double delta, LabelFamily family, const LabelThresholds& thresholds) {
    if (!std::isfinite(delta)) throw DomainError("non-finite trend delta");
    int ordinal = 5;
    for (int k = 0; k < 4; ++k) {
        if (delta >= thresholds.lower_bounds[static_cast<std::size_t>(k)]) {
            ordinal = k + 1;
            break;
        }
    }
    return {ordinal, family};
}

LabelCategory label_tmp(double delta) {
    return label_delta(delta, LabelFamily::T, LabelThresholds::temperature());
}

LabelCategory label_pre(double delta) {
    return label_delta(delta, LabelFamily::P, LabelThresholds::precipitation());
}

std::optional<TrendDelta> trend_delta(const ClimateCube& cube, std::size_t cell, VariableId target,
                                      const WindowSpec& window) {
    if (window.start_month_index % 12 != 0) throw DomainError("window must start on a January");
    if (window.labeling_end_month() > cube.n_months()) throw DomainError("window extends past the end of the cube");
    const std::size_t slot = cube.require_slot(target);

    auto mean = [&](int from, int to) -> std::optional<double> {
        double sum = 0.0;
        for (int m = from; m < to; ++m) {
            const float x = cube.at(slot, m, cell);
            if (is_missing(x)) return std::nullopt;
            sum += x;
        }
        return sum / static_cast<double>(to - from);
    };

    const auto mu30 = mean(window.start_month_index, window.training_end_month());
    if (!mu30) return std::nullopt;
    const auto mu10 = mean(window.training_end_month(), window.labeling_end_month());
    if (!mu10) return std::nullopt;
    return TrendDelta{*mu30, *mu10, *mu10 - *mu30};
}

}  // namespace varenn
