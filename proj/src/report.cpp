#include <cmath>
#include <cstdio>
#include <sstream>

#include "binary_io.hpp"
#include "text_util.hpp"
#include "varenn/error.hpp"
#include "varenn/experiment.hpp"

namespace varenn {

namespace {

constexpr std::string_view kSuiteColumns =
    "id\tk\tinputs\tknockout\ttraining_years\tstatus\tn_train\tn_validation\tn_test\taccuracy\tkappa\tsimilarity\t"
    "error";

std::string one_line(std::string s) {
    for (char& c : s)
        if (c == '\t' || c == '\n' || c == '\r') c = ' ';
    return s;
}

std::string fixed(double v, int digits = 3) {
    if (!std::isfinite(v)) return "n/a";
    char buf[64];
    std::snprintf(buf, sizeof buf, "%.*f", digits, v);
    return buf;
}

std::string pvalue(double p) {
    char buf[64];
    if (p < 1e-4)
        std::snprintf(buf, sizeof buf, "%.2e", p);
    else
        std::snprintf(buf, sizeof buf, "%.4f", p);
    return buf;
}

const char* group_name(std::size_t k) {
    static const char* names[] = {"1-VAR", "2-VAR", "3-VAR"};
    return names[k];
}

const char* pair_name(std::size_t p) {
    static const char* names[] = {"1-VAR vs 2-VAR", "1-VAR vs 3-VAR", "2-VAR vs 3-VAR"};
    return names[p];
}

std::string inputs_cell(const std::vector<VariableId>& inputs, char sep) {
    return inputs.empty() ? std::string("-") : join_codes(inputs, sep);
}

}  // namespace

std::string format_suite_tsv(const SuiteReport& suite) {
    std::ostringstream out;
    out << kSuiteColumns << '\n';
    for (const auto& r : suite.rows) {
        out << r.id << '\t' << r.inputs.size() << '\t' << inputs_cell(r.inputs, ',') << '\t' << to_string(r.knockout)
            << '\t' << r.training_years << '\t' << (r.ok ? std::string("ok") : "error:" + r.error_category) << '\t'
            << r.n_train << '\t' << r.n_validation << '\t' << r.n_test << '\t'
            << detail::format_double(r.ok ? r.accuracy : std::nan("")) << '\t' << detail::format_double(r.kappa)
            << '\t' << detail::format_double(r.similarity) << '\t' << (r.ok ? std::string("-") : one_line(r.error))
            << '\n';
    }
    if (suite.rows.empty()) return out.str();

    const GroupStats& g = suite.stats;
    if (g.kruskal_wallis)
        out << "# kruskal_wallis\tH\t" << detail::format_double(g.kruskal_wallis->statistic) << "\tp\t"
            << detail::format_double(g.kruskal_wallis->p_value) << "\texact\t" << (g.kruskal_wallis->exact ? 1 : 0)
            << '\n';
    for (std::size_t p = 0; p < 3; ++p) {
        if (!g.mann_whitney[p]) continue;
        const auto& t = *g.mann_whitney[p];
        out << "# mann_whitney\t" << pair_name(p) << "\tU\t" << detail::format_double(t.statistic) << "\tp_bonferroni\t"
            << detail::format_double(t.p_value) << "\texact\t" << (t.exact ? 1 : 0) << '\n';
    }
    auto regression_line = [&](const char* name, const std::optional<OlsResult>& r) {
        if (!r) return;
        out << "# regression\t" << name << "\tslope\t" << detail::format_double(r->slope) << "\tintercept\t"
            << detail::format_double(r->intercept) << "\tp\t" << detail::format_double(r->p_value) << "\tn\t" << r->n
            << '\n';
    };
    for (std::size_t k = 0; k < 3; ++k) regression_line(group_name(k), g.regression[k]);
    regression_line("pooled", g.pooled_regression);
    return out.str();
}

SuiteReport parse_suite_tsv(std::string_view text) {
    const auto ls = detail::lines(text);
    if (ls.empty() || ls[0] != kSuiteColumns) throw FormatError("not a suite report (unexpected header)");
    SuiteReport suite;
    for (std::size_t i = 1; i < ls.size(); ++i) {
        if (ls[i].empty() || ls[i].starts_with("#")) continue;
        const auto f = detail::split(ls[i], '\t');
        if (f.size() != 13) throw FormatError("suite report line " + std::to_string(i + 1) + ": expected 13 fields");
        ExperimentResult r;
        r.id = detail::parse_number<int>(f[0], "id");
        if (f[2] != "-") r.inputs = parse_variable_list(f[2]);
        r.knockout = parse_knockout(f[3]);
        r.training_years = detail::parse_number<int>(f[4], "training_years");
        r.ok = f[5] == "ok";
        if (!r.ok) {
            if (!f[5].starts_with("error:")) throw FormatError("bad status '" + std::string(f[5]) + "'");
            r.error_category = std::string(f[5].substr(6));
            r.error = std::string(f[12]);
        }
        r.n_train = detail::parse_number<std::size_t>(f[6], "n_train");
        r.n_validation = detail::parse_number<std::size_t>(f[7], "n_validation");
        r.n_test = detail::parse_number<std::size_t>(f[8], "n_test");
        r.accuracy = detail::parse_number<double>(f[9], "accuracy");
        r.kappa = detail::parse_number<double>(f[10], "kappa");
        r.similarity = detail::parse_number<double>(f[11], "similarity");
        suite.rows.push_back(std::move(r));
    }
    suite.stats = compute_group_stats(suite.rows);
    return suite;
}

std::string format_suite_summary(const SuiteReport& suite) {
    std::ostringstream out;
    const char* family = suite.target == Target::TMP ? "TMP-EX" : "PRE-EX";
    out << family << " suite  c_t " << detail::format_double(suite.c_t) << "  seed " << suite.seed << "  experiments "
        << suite.rows.size() << "\n\n";
    char buf[256];
    std::snprintf(buf, sizeof buf, "%4s  %-6s %-6s %-6s  %8s  %8s  %10s\n", "No.", "Var1", "Var2", "Var3", "Accuracy",
                  "Kappa", "Similarity");
    out << buf;
    for (const auto& r : suite.rows) {
        std::array<std::string, 3> v{"", "", ""};
        for (std::size_t k = 0; k < r.inputs.size() && k < 3; ++k) v[k] = std::string(code_of(r.inputs[k]));
        if (r.ok) {
            std::snprintf(buf, sizeof buf, "%4d  %-6s %-6s %-6s  %8s  %8s  %10s\n", r.id, v[0].c_str(), v[1].c_str(),
                          v[2].c_str(), fixed(r.accuracy).c_str(), fixed(r.kappa).c_str(), fixed(r.similarity).c_str());
            out << buf;
        } else {
            std::snprintf(buf, sizeof buf, "%4d  %-6s %-6s %-6s  ", r.id, v[0].c_str(), v[1].c_str(), v[2].c_str());
            out << buf << "error[" << r.error_category << "]: " << one_line(r.error) << '\n';
        }
    }
    const GroupStats& g = suite.stats;
    if (g.kruskal_wallis || g.pooled_regression) out << '\n';
    if (g.kruskal_wallis)
        out << "Kruskal-Wallis across k-VAR groups: H = " << fixed(g.kruskal_wallis->statistic)
            << ", p = " << pvalue(g.kruskal_wallis->p_value) << '\n';
    for (std::size_t p = 0; p < 3; ++p)
        if (g.mann_whitney[p])
            out << "Mann-Whitney " << pair_name(p) << ": U = " << fixed(g.mann_whitney[p]->statistic, 1)
                << ", p (Bonferroni x3) = " << pvalue(g.mann_whitney[p]->p_value) << '\n';
    for (std::size_t k = 0; k < 3; ++k)
        if (g.regression[k])
            out << "Accuracy ~ similarity, " << group_name(k) << ": slope = " << fixed(g.regression[k]->slope, 4)
                << ", p = " << pvalue(g.regression[k]->p_value) << ", n = " << g.regression[k]->n << '\n';
    if (g.pooled_regression)
        out << "Accuracy ~ similarity, pooled: slope = " << fixed(g.pooled_regression->slope, 4)
            << ", p = " << pvalue(g.pooled_regression->p_value) << ", n = " << g.pooled_regression->n << '\n';
    return out.str();
}

void write_report(const SuiteReport& suite, const std::filesystem::path& path) {
    detail::write_text_file(path, format_suite_tsv(suite));
    detail::write_text_file(path.string() + ".txt", format_suite_summary(suite));
}

std::string format_ablations(const AblationReport& report) {
    std::ostringstream out;
    out << "experiment\t" << report.base.id << "\ttarget\t" << to_string(report.base.target) << "\tinputs\t"
        << inputs_cell(report.base.inputs, ',') << '\n';
    out << "variant\tknockout\ttraining_years\tstatus\taccuracy\tkappa\tn_test\n";
    for (const auto& row : report.rows) {
        const auto& r = row.result;
        out << row.name << '\t' << to_string(r.knockout) << '\t' << r.training_years << '\t'
            << (r.ok ? std::string("ok") : "error:" + r.error_category) << '\t'
            << detail::format_double(r.ok ? r.accuracy : std::nan("")) << '\t' << detail::format_double(r.kappa)
            << '\t' << r.n_test << '\n';
    }
    return out.str();
}

}  // namespace varenn
