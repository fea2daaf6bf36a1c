#include <pybind11/pybind11.h>
#include <pybind11/stl.h>

#include "nutriscreen/autodiff.hpp"
#include "nutriscreen/feature_select.hpp"
#include "nutriscreen/harness.hpp"
#include "nutriscreen/synth.hpp"

namespace py = pybind11;
using namespace nutriscreen;

namespace {

Matrix matrix_from_rows(const std::vector<std::vector<double>>& rows) {
    if (rows.empty()) throw ValidationError("empty feature matrix");
    Matrix m(rows.size(), rows.front().size());
    for (std::size_t r = 0; r < rows.size(); ++r) {
        if (rows[r].size() != m.cols) throw ValidationError("ragged feature matrix");
        std::copy(rows[r].begin(), rows[r].end(), m.data.begin() + static_cast<std::ptrdiff_t>(r * m.cols));
    }
    return m;
}

Dataset dataset_from_python(const std::vector<std::vector<double>>& X, const std::vector<int>& y,
                            std::vector<std::string> names) {
    Dataset ds;
    ds.features = matrix_from_rows(X);
    ds.labels = y;
    if (names.empty())
        for (std::size_t j = 0; j < ds.features.cols; ++j) names.push_back("f" + std::to_string(j));
    ds.feature_names = std::move(names);
    ds.validate();
    return ds;
}

}  // namespace

PYBIND11_MODULE(_nutriscreen, m) {
    m.doc() = "survey-tabular malnutrition screening toolkit (C++ core)";

    // --- preprocessing -----------------------------------------------------
    m.def(
        "derive_label",
        [](double waz, double haz, double whz) {
            const MalnutritionLabel label = derive_label({waz, haz, whz});
            return py::dict(py::arg("underweight") = label.underweight, py::arg("stunted") = label.stunted,
                            py::arg("wasted") = label.wasted, py::arg("malnourished") = label.malnourished);
        },
        py::arg("waz"), py::arg("haz"), py::arg("whz"),
        "Composite label from WHO z-scores (strict < -2 on any index).");

    m.def("default_schema_json", [] { return default_schema_bundle().to_json(); },
          "Bundled 16-feature schema + encoding rules as JSON text.");

    // --- synthetic data ----------------------------------------------------
    m.def(
        "generate_table",
        [](std::size_t n, std::uint64_t seed, const std::string& mode) {
            std::optional<SignalSpec> signal;
            if (mode == "planted") signal = SignalSpec::builtin_strong();
            else if (mode != "marginal") throw ValidationError("mode must be marginal or planted");
            const RawTable table = generate(builtin_marginals(), signal, n, seed);
            return py::make_tuple(table.column_names, table.rows);
        },
        py::arg("n"), py::arg("seed") = 7, py::arg("mode") = "marginal",
        "Synthetic survey rows drawn from the published marginals; returns (header, rows).");

    m.def(
        "encode_default",
        [](const std::vector<std::string>& header, const std::vector<std::vector<std::string>>& rows) {
            RawTable table;
            table.column_names = header;
            table.rows = rows;
            const SchemaBundle bundle = default_schema_bundle();
            const EncodeResult result = encode(table, bundle.schema, bundle.encoding);
            std::vector<std::vector<double>> X(result.dataset.n_rows());
            for (std::size_t r = 0; r < result.dataset.n_rows(); ++r) {
                const auto row = result.dataset.features.row(r);
                X[r].assign(row.begin(), row.end());
            }
            return py::make_tuple(X, result.dataset.labels, result.dataset.feature_names);
        },
        py::arg("header"), py::arg("rows"),
        "Encode raw survey rows with the bundled schema; returns (X, y, feature_names).");

    // --- splitting ----------------------------------------------------------
    m.def(
        "split_stratified",
        [](const std::vector<std::vector<double>>& X, const std::vector<int>& y, double ratio, std::uint64_t seed) {
            const Dataset ds = dataset_from_python(X, y, {});
            const SplitPlan plan = split_stratified(ds, ratio, seed);
            return py::make_tuple(plan.train_indices, plan.test_indices);
        },
        py::arg("X"), py::arg("y"), py::arg("ratio") = 0.8, py::arg("seed") = 42);

    // --- metrics -------------------------------------------------------------
    m.def("roc_auc", [](const std::vector<int>& y, const std::vector<double>& s) { return roc_auc(y, s); });
    m.def("average_precision",
          [](const std::vector<int>& y, const std::vector<double>& s) { return average_precision(y, s); });
    m.def("brier", [](const std::vector<int>& y, const std::vector<double>& p) { return brier(y, p); });
    m.def(
        "evaluate_scores",
        [](const std::vector<int>& y, const std::vector<double>& s, double threshold) {
            const MetricSet metrics = evaluate_scores(y, s, threshold);
            py::dict out;
            for (const auto& name : MetricSet::names()) out[name.c_str()] = metrics.by_name(name);
            return out;
        },
        py::arg("y"), py::arg("scores"), py::arg("threshold") = 0.5,
        "All ten evaluation metrics at a decision threshold.");

    m.def("sparsemax", [](const std::vector<double>& z) { return sparsemax(z); },
          "Euclidean projection onto the probability simplex.");

    // --- models ---------------------------------------------------------------
    py::class_<FittedPipeline>(m, "FittedPipeline")
        .def("score",
             [](const FittedPipeline& self, const std::vector<std::vector<double>>& X) {
                 Dataset ds;
                 ds.features = matrix_from_rows(X);
                 ds.labels.assign(ds.features.rows, 0);
                 for (std::size_t j = 0; j < ds.features.cols; ++j)
                     ds.feature_names.push_back("f" + std::to_string(j));
                 return self.score(ds);
             })
        .def_property_readonly("threshold", [](const FittedPipeline& self) { return self.threshold; })
        .def("to_json", [](const FittedPipeline& self) { return self.to_json().dump(); });

    m.def(
        "fit_model",
        [](const std::string& name, const std::vector<std::vector<double>>& X, const std::vector<int>& y,
           std::uint64_t seed, const std::string& hyper_json) {
            const Dataset ds = dataset_from_python(X, y, {});
            return fit_named_model(name, nlohmann::json::parse(hyper_json), ds, seed);
        },
        py::arg("name"), py::arg("X"), py::arg("y"), py::arg("seed") = 42, py::arg("hyper") = "{}",
        "Fit one benchmark model by name (e.g. 'logistic_regression', 'tabnet').");

    m.def("model_names", [] {
        std::vector<std::string> names;
        for (const auto& entry : BenchmarkConfig::defaults().roster) names.push_back(entry.name);
        return names;
    });

    m.def(
        "boruta_min_hits_to_confirm",
        [](int iterations, double alpha, int n_features) {
            return boruta_min_hits_to_confirm(iterations, alpha, n_features);
        },
        py::arg("iterations"), py::arg("alpha"), py::arg("n_features"));
}
