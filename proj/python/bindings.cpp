#include <pybind11/numpy.h>
#include <pybind11/pybind11.h>
#include <pybind11/stl.h>

#include "varenn/error.hpp"
#include "varenn/experiment.hpp"

namespace py = pybind11;
using namespace varenn;

namespace {

std::vector<VariableId> codes(const std::vector<std::string>& names) {
    std::vector<VariableId> out;
    for (const auto& n : names) out.push_back(parse_variable(n));
    return out;
}

std::vector<std::string> names(std::span<const VariableId> vars) {
    std::vector<std::string> out;
    for (auto v : vars) out.emplace_back(code_of(v));
    return out;
}

py::array_t<float> image_array(const std::vector<float>& pixels) {
    py::array_t<float> a({kImageSize, kImageSize, kChannels});
    std::copy(pixels.begin(), pixels.end(), a.mutable_data());
    return a;
}

py::dict test_dict(const StatTestResult& r) {
    py::dict d;
    d["statistic"] = r.statistic;
    d["p_value"] = r.p_value;
    d["exact"] = r.exact;
    return d;
}

}  // namespace

PYBIND11_MODULE(_varenn, m) {
    m.doc() = "VARENN climate-image pipeline core";

    static py::exception<Error> error(m, "VarennError", PyExc_ValueError);
    py::register_exception_translator([](std::exception_ptr p) {
        try {
            if (p) std::rethrow_exception(p);
        } catch (const Error& e) {
            py::object exc = py::reinterpret_borrow<py::object>(error.ptr())(std::string(to_string(e.category())) + ": " + e.what());
            exc.attr("category") = std::string(to_string(e.category()));
            PyErr_SetObject(error.ptr(), exc.ptr());
        }
    });

    py::class_<ClimateCube>(m, "Cube")
        .def_static("load", [](const std::string& path) { return load_cube(path); })
        .def_static("from_synth", [](const std::string& spec_text) { return synth_generate(parse_synth_spec(spec_text)).cube; },
                    py::arg("spec_text"))
        .def("save", [](const ClimateCube& c, const std::string& path) { save_cube(c, path); })
        .def_property_readonly("variables", [](const ClimateCube& c) { return names(c.variables()); })
        .def_property_readonly("n_cells", &ClimateCube::n_cells)
        .def_property_readonly("n_years", &ClimateCube::n_years)
        .def_property_readonly("start_year", &ClimateCube::start_year)
        .def_property_readonly("cell_ids",
                               [](const ClimateCube& c) {
                                   std::vector<std::int64_t> ids;
                                   for (const auto& g : c.grid()) ids.push_back(g.cell_id);
                                   return ids;
                               })
        .def("values", [](const ClimateCube& c, const std::string& var) {
            const auto slot = c.require_slot(parse_variable(var));
            py::array_t<float> a({static_cast<std::size_t>(c.n_months()), c.n_cells()});
            const auto v = c.values().subspan(slot * static_cast<std::size_t>(c.n_months()) * c.n_cells(),
                                              static_cast<std::size_t>(c.n_months()) * c.n_cells());
            std::copy(v.begin(), v.end(), a.mutable_data());
            return a;
        }, "Monthly values of one variable as [month, cell]; NaN marks missing data.");

    m.def("enumerate_windows",
          [](int n_years, int training_years, int labeling_years) {
              std::vector<int> starts;
              for (const auto& w : enumerate_windows(n_years, training_years, labeling_years))
                  starts.push_back(w.start_year_index());
              return starts;
          },
          py::arg("n_years"), py::arg("training_years") = 30, py::arg("labeling_years") = 10,
          "Start-year offsets of every complete window.");

    m.def("enumerate_combinations",
          [](const std::string& target) {
              std::vector<std::pair<int, std::vector<std::string>>> out;
              for (const auto& s : enumerate_combinations(parse_target(target))) out.emplace_back(s.id, names(s.inputs));
              return out;
          },
          py::arg("target") = "TMP");

    m.def("label_tmp", [](double d) { return label_tmp(d).ordinal; });
    m.def("label_pre", [](double d) { return label_pre(d).ordinal; });

    m.def("encode_window",
          [](const ClimateCube& cube, std::size_t cell, const std::vector<std::string>& inputs, int start_year_index,
             int training_years, const std::string& knockout, const std::string& scaling) -> py::object {
              WindowSpec w;
              w.start_month_index = 12 * start_year_index;
              w.training_years = training_years;
              const auto vars = codes(inputs);
              const auto img = encode_window(cube, cell, vars, w, global_minmax(cube),
                                             {parse_knockout(knockout), parse_scaling(scaling)});
              if (!img) return py::none();
              return image_array(img->pixels);
          },
          py::arg("cube"), py::arg("cell"), py::arg("inputs"), py::arg("start_year_index") = 0,
          py::arg("training_years") = 30, py::arg("knockout") = "none", py::arg("scaling") = "global",
          "60x60x3 float image in [0, 1], or None if the training period has missing data.");

    m.def("weighted_kappa",
          [](const std::vector<std::vector<std::size_t>>& counts, const std::string& weights) {
              std::vector<std::size_t> flat;
              for (const auto& row : counts) {
                  if (row.size() != counts.size()) throw ValidationError("confusion matrix must be square");
                  flat.insert(flat.end(), row.begin(), row.end());
              }
              const auto cm = ConfusionMatrix::from_counts(counts.size(), flat);
              return weighted_kappa(cm, weights == "linear" ? KappaWeights::linear : KappaWeights::quadratic);
          },
          py::arg("counts"), py::arg("weights") = "quadratic");
    m.def("kruskal_wallis", [](const std::vector<std::vector<double>>& g) { return test_dict(kruskal_wallis(g)); });
    m.def("mann_whitney_u",
          [](const std::vector<double>& a, const std::vector<double>& b, int comparisons) {
              return test_dict(mann_whitney_u(a, b, comparisons));
          },
          py::arg("a"), py::arg("b"), py::arg("comparisons") = 1);
    m.def("ols_regression", [](const std::vector<double>& x, const std::vector<double>& y) {
        const auto r = ols_regression(x, y);
        py::dict d;
        d["slope"] = r.slope;
        d["intercept"] = r.intercept;
        d["p_value"] = r.p_value;
        d["r_squared"] = r.r_squared;
        d["n"] = r.n;
        return d;
    });

    m.def("run_experiment",
          [](const ClimateCube& cube, const std::vector<std::string>& inputs, const std::string& target, double c_t,
             std::uint64_t seed, int epochs, const std::string& knockout, int training_years, int conv1, int conv2,
             int fc1) {
              ExperimentSpec spec;
              spec.target = parse_target(target);
              spec.inputs = codes(inputs);
              spec.c_t = c_t;
              spec.seed = seed;
              spec.knockout = parse_knockout(knockout);
              spec.training_years = training_years;
              TrainConfig cfg;
              cfg.seed = seed;
              cfg.epochs = epochs;
              cfg.net.conv1_filters = conv1;
              cfg.net.conv2_filters = conv2;
              cfg.net.fc1_units = fc1;
              ExperimentRun run;
              {
                  py::gil_scoped_release release;
                  run = run_experiment(cube, spec, cfg);
              }
              const auto& r = run.result;
              py::dict d;
              d["accuracy"] = r.accuracy;
              d["kappa"] = r.kappa;
              d["n_train"] = r.n_train;
              d["n_validation"] = r.n_validation;
              d["n_test"] = r.n_test;
              std::vector<std::vector<std::size_t>> cm(kClasses, std::vector<std::size_t>(kClasses));
              for (std::size_t i = 0; i < static_cast<std::size_t>(kClasses); ++i)
                  for (std::size_t j = 0; j < static_cast<std::size_t>(kClasses); ++j) cm[i][j] = r.confusion.at(i, j);
              d["confusion"] = cm;
              return d;
          },
          py::arg("cube"), py::arg("inputs"), py::arg("target") = "TMP", py::arg("c_t") = 0.0, py::arg("seed") = 1,
          py::arg("epochs") = 30, py::arg("knockout") = "none", py::arg("training_years") = 30,
          py::arg("conv1") = 20, py::arg("conv2") = 50, py::arg("fc1") = 500,
          "Dataset, training and test-split evaluation for one input combination.");
}
