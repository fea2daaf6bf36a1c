#include "nutriscreen/metrics.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <sstream>

#include "nutriscreen/feature_select.hpp"
#include "nutriscreen/models_boosting.hpp"
#include "nutriscreen/models_classic.hpp"

namespace nutriscreen {

using nlohmann::json;

ConfusionMatrix confusion(std::span<const int> y_true, std::span<const int> y_pred) {
    if (y_true.size() != y_pred.size()) throw LengthMismatch("confusion: length mismatch");
    ConfusionMatrix cm;
    for (std::size_t i = 0; i < y_true.size(); ++i) {
        const int t = y_true[i], p = y_pred[i];
        if ((t != 0 && t != 1) || (p != 0 && p != 1)) throw NonBinaryValue("confusion: values must be 0/1");
        if (t == 1) (p == 1 ? cm.tp : cm.fn)++;
        else (p == 1 ? cm.fp : cm.tn)++;
    }
    return cm;
}

const std::vector<std::string>& MetricSet::names() {
    static const std::vector<std::string> kNames = {
        "accuracy",         "precision",    "recall", "f1",  "roc_auc", "average_precision",
        "balanced_accuracy", "cohens_kappa", "mcc",    "brier"};
    return kNames;
}

double MetricSet::by_name(const std::string& name) const {
    if (name == "accuracy") return accuracy;
    if (name == "precision") return precision;
    if (name == "recall") return recall;
    if (name == "f1") return f1;
    if (name == "roc_auc") return roc_auc;
    if (name == "average_precision") return average_precision;
    if (name == "balanced_accuracy") return balanced_accuracy;
    if (name == "cohens_kappa") return cohens_kappa;
    if (name == "mcc") return mcc;
    if (name == "brier") return brier;
    throw ValidationError("unknown metric: " + name);
}

json MetricSet::to_json() const {
    return json{{"accuracy", accuracy},
                {"precision", precision},
                {"recall", recall},
                {"f1", f1},
                {"roc_auc", roc_auc},
                {"average_precision", average_precision},
                {"balanced_accuracy", balanced_accuracy},
                {"cohens_kappa", cohens_kappa},
                {"mcc", mcc},
                {"brier", brier},
                {"undefined", undefined}};
}

MetricSet MetricSet::from_json(const json& doc) {
    MetricSet m;
    m.accuracy = doc.at("accuracy").get<double>();
    m.precision = doc.at("precision").get<double>();
    m.recall = doc.at("recall").get<double>();
    m.f1 = doc.at("f1").get<double>();
    m.roc_auc = doc.at("roc_auc").get<double>();
    m.average_precision = doc.at("average_precision").get<double>();
    m.balanced_accuracy = doc.at("balanced_accuracy").get<double>();
    m.cohens_kappa = doc.at("cohens_kappa").get<double>();
    m.mcc = doc.at("mcc").get<double>();
    m.brier = doc.at("brier").get<double>();
    m.undefined = doc.at("undefined").get<std::vector<std::string>>();
    return m;
}

MetricSet threshold_metrics(const ConfusionMatrix& cm) {
    const double n = static_cast<double>(cm.total());
    if (cm.total() == 0) throw EmptyEvaluation("threshold_metrics on empty evaluation");
    const double tp = static_cast<double>(cm.tp), tn = static_cast<double>(cm.tn);
    const double fp = static_cast<double>(cm.fp), fn = static_cast<double>(cm.fn);

    MetricSet m;
    auto ratio = [&](double num, double den, const char* name) {
        if (den == 0.0) {
            m.undefined.push_back(name);
            return 0.0;
        }
        return num / den;
    };

    m.accuracy = (tp + tn) / n;
    m.precision = ratio(tp, tp + fp, "precision");
    m.recall = ratio(tp, tp + fn, "recall");
    m.f1 = ratio(2.0 * tp, 2.0 * tp + fp + fn, "f1");
    const double specificity = ratio(tn, tn + fp, "balanced_accuracy");
    m.balanced_accuracy = 0.5 * (m.recall + specificity);

    const double po = m.accuracy;
    const double pe = ((tp + fp) * (tp + fn) + (fn + tn) * (fp + tn)) / (n * n);
    if (pe == 1.0) {
        m.undefined.push_back("cohens_kappa");
        m.cohens_kappa = 0.0;
    } else {
        m.cohens_kappa = (po - pe) / (1.0 - pe);
    }

    const double mcc_den = std::sqrt((tp + fp) * (tp + fn) * (tn + fp) * (tn + fn));
    if (mcc_den == 0.0) {
        m.undefined.push_back("mcc");
        m.mcc = 0.0;
    } else {
        m.mcc = (tp * tn - fp * fn) / mcc_den;
    }
    return m;
}

double roc_auc(std::span<const int> y_true, std::span<const double> scores) {
    if (y_true.size() != scores.size()) throw LengthMismatch("roc_auc: length mismatch");
    const std::size_t n = y_true.size();
    std::size_t n1 = 0;
    for (int y : y_true) {
        if (y != 0 && y != 1) throw NonBinaryValue("roc_auc: labels must be 0/1");
        n1 += static_cast<std::size_t>(y);
    }
    const std::size_t n0 = n - n1;
    if (n0 == 0 || n1 == 0) throw SingleClassEvaluation("roc_auc needs both classes");

    std::vector<std::size_t> order(n);
    std::iota(order.begin(), order.end(), 0);
    std::sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) { return scores[a] < scores[b]; });

    // Average ranks over tie groups; AUC from the rank-sum of positives.
    double rank_sum_pos = 0.0;
    std::size_t i = 0;
    while (i < n) {
        std::size_t j = i;
        while (j < n && scores[order[j]] == scores[order[i]]) ++j;
        const double avg_rank = 0.5 * static_cast<double>(i + 1 + j);  // ranks are 1-based
        for (std::size_t k = i; k < j; ++k)
            if (y_true[order[k]]) rank_sum_pos += avg_rank;
        i = j;
    }
    return (rank_sum_pos - 0.5 * static_cast<double>(n1) * static_cast<double>(n1 + 1)) /
           (static_cast<double>(n1) * static_cast<double>(n0));
}

double average_precision(std::span<const int> y_true, std::span<const double> scores) {
    if (y_true.size() != scores.size()) throw LengthMismatch("average_precision: length mismatch");
    std::size_t n1 = 0;
    for (int y : y_true) n1 += static_cast<std::size_t>(y);
    if (n1 == 0) throw NoPositives("average_precision needs at least one positive");

    std::vector<std::size_t> order(y_true.size());
    std::iota(order.begin(), order.end(), 0);
    std::sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) { return scores[a] > scores[b]; });

    double ap = 0.0, tp = 0.0, seen = 0.0, prev_recall = 0.0;
    std::size_t i = 0;
    while (i < order.size()) {
        std::size_t j = i;
        while (j < order.size() && scores[order[j]] == scores[order[i]]) ++j;
        for (std::size_t k = i; k < j; ++k) {
            tp += static_cast<double>(y_true[order[k]]);
            seen += 1.0;
        }
        const double recall = tp / static_cast<double>(n1);
        const double precision = tp / seen;
        ap += (recall - prev_recall) * precision;
        prev_recall = recall;
        i = j;
    }
    return ap;
}

double brier(std::span<const int> y_true, std::span<const double> probs) {
    if (y_true.size() != probs.size()) throw LengthMismatch("brier: length mismatch");
    if (y_true.empty()) throw EmptyEvaluation("brier on empty evaluation");
    double sum = 0.0;
    for (std::size_t i = 0; i < probs.size(); ++i) {
        if (probs[i] < 0.0 || probs[i] > 1.0 || !std::isfinite(probs[i]))
            throw ProbabilityOutOfRange("brier: probability outside [0,1]");
        const double d = probs[i] - static_cast<double>(y_true[i]);
        sum += d * d;
    }
    return sum / static_cast<double>(probs.size());
}

CalibrationCurve calibration_curve(std::span<const int> y_true, std::span<const double> probs, int n_bins) {
    if (y_true.size() != probs.size()) throw LengthMismatch("calibration_curve: length mismatch");
    if (n_bins < 1) throw ValidationError("calibration_curve needs n_bins >= 1");
    CalibrationCurve curve;
    curve.n_bins = n_bins;
    curve.bins.resize(static_cast<std::size_t>(n_bins));
    std::vector<double> pred_sum(static_cast<std::size_t>(n_bins), 0.0);
    std::vector<double> pos_sum(static_cast<std::size_t>(n_bins), 0.0);

    for (std::size_t i = 0; i < probs.size(); ++i) {
        if (probs[i] < 0.0 || probs[i] > 1.0) throw ProbabilityOutOfRange("calibration: probability outside [0,1]");
        int b = static_cast<int>(probs[i] * n_bins);
        if (b == n_bins) b = n_bins - 1;  // p == 1.0 joins the top bin
        ++curve.bins[static_cast<std::size_t>(b)].count;
        pred_sum[static_cast<std::size_t>(b)] += probs[i];
        pos_sum[static_cast<std::size_t>(b)] += static_cast<double>(y_true[i]);
    }
    for (int b = 0; b < n_bins; ++b) {
        auto& bin = curve.bins[static_cast<std::size_t>(b)];
        bin.low = static_cast<double>(b) / n_bins;
        bin.high = static_cast<double>(b + 1) / n_bins;
        if (bin.count == 0) {
            bin.undefined = true;
        } else {
            bin.mean_pred = pred_sum[static_cast<std::size_t>(b)] / static_cast<double>(bin.count);
            bin.frac_pos = pos_sum[static_cast<std::size_t>(b)] / static_cast<double>(bin.count);
        }
    }
    return curve;
}

std::string CalibrationCurve::to_csv() const {
    std::ostringstream out;
    out << "bin_low,bin_high,mean_pred,frac_pos,count\n";
    for (const auto& bin : bins) {
        out << format_double(bin.low) << ',' << format_double(bin.high) << ',';
        if (bin.undefined) out << ",";
        else out << format_double(bin.mean_pred) << ',' << format_double(bin.frac_pos);
        out << ',' << bin.count << '\n';
    }
    return out.str();
}

json CalibrationCurve::to_json() const {
    json bins_json = json::array();
    for (const auto& bin : bins)
        bins_json.push_back({{"low", bin.low},
                             {"high", bin.high},
                             {"mean_pred", bin.mean_pred},
                             {"frac_pos", bin.frac_pos},
                             {"count", bin.count},
                             {"undefined", bin.undefined}});
    return json{{"n_bins", n_bins}, {"bins", bins_json}};
}

MetricSet evaluate_scores(std::span<const int> y_true, std::span<const double> scores, double threshold) {
    std::vector<int> preds(y_true.size());
    for (std::size_t i = 0; i < y_true.size(); ++i) preds[i] = scores[i] >= threshold ? 1 : 0;
    MetricSet m = threshold_metrics(confusion(y_true, preds));
    try {
        m.roc_auc = roc_auc(y_true, scores);
    } catch (const SingleClassEvaluation&) {
        m.undefined.push_back("roc_auc");
    }
    try {
        m.average_precision = average_precision(y_true, scores);
    } catch (const NoPositives&) {
        m.undefined.push_back("average_precision");
    }
    m.brier = brier(y_true, scores);
    return m;
}

// ---------------------------------------------------------------------------
// Consensus importance
// ---------------------------------------------------------------------------

namespace {

std::vector<double> minmax_normalize(std::vector<double> v) {
    if (v.empty()) return v;
    const auto [lo_it, hi_it] = std::minmax_element(v.begin(), v.end());
    const double lo = *lo_it, hi = *hi_it;
    if (hi - lo <= 0.0) {
        std::fill(v.begin(), v.end(), 0.0);
        return v;
    }
    for (double& x : v) x = (x - lo) / (hi - lo);
    return v;
}

}  // namespace

std::vector<ConsensusEntry> consensus_importance(const Dataset& ds, std::uint64_t seed) {
    const std::size_t p = ds.n_cols();

    const MethodScore mi = filter_scores(ds, FilterMethod::mutual_info);

    GbdtConfig gcfg;
    gcfg.n_rounds = 100;
    const auto gbdt = fit_gbdt(ds, gcfg, seed);

    ForestConfig fcfg;
    fcfg.n_trees = 100;
    const auto forest = fit_forest(ds, fcfg, seed ^ 0xF07E57);
    const auto rf_imp = impurity_importance(*forest, p);

    const auto l1 = embedded_importance(ds, EmbeddedBase::l1_logreg, seed ^ 0x1A550);

    std::vector<ConsensusEntry> entries(p);
    const auto mi_n = minmax_normalize(mi.scores);
    const auto gb_n = minmax_normalize(gbdt->feature_gain);
    const auto rf_n = minmax_normalize(rf_imp);
    const auto l1_n = minmax_normalize(l1.scores);
    for (std::size_t j = 0; j < p; ++j) {
        entries[j].feature = ds.feature_names[j];
        entries[j].mutual_info = mi_n[j];
        entries[j].gbdt_gain = gb_n[j];
        entries[j].rf_importance = rf_n[j];
        entries[j].l1_coef = l1_n[j];
        entries[j].consensus = 0.25 * (mi_n[j] + gb_n[j] + rf_n[j] + l1_n[j]);
    }

    std::vector<std::size_t> order(p);
    std::iota(order.begin(), order.end(), 0);
    std::stable_sort(order.begin(), order.end(),
                     [&](std::size_t a, std::size_t b) { return entries[a].consensus > entries[b].consensus; });
    for (std::size_t r = 0; r < p; ++r) entries[order[r]].rank = static_cast<int>(r) + 1;
    return entries;
}

// ---------------------------------------------------------------------------
// PCA
// ---------------------------------------------------------------------------

PcaResult pca_project(const Dataset& ds, int k) {
    const std::size_t n = ds.n_rows(), p = ds.n_cols();
    if (k < 1 || static_cast<std::size_t>(k) > p) throw ValidationError("pca: k must be in [1, n_cols]");
    if (n < 2) throw ValidationError("pca needs at least 2 rows");

    // Centered covariance (population normalization).
    std::vector<double> mean(p, 0.0);
    for (std::size_t r = 0; r < n; ++r) {
        const auto row = ds.features.row(r);
        for (std::size_t j = 0; j < p; ++j) mean[j] += row[j];
    }
    for (double& m : mean) m /= static_cast<double>(n);

    Matrix cov(p, p);
    std::vector<double> centered(p);
    for (std::size_t r = 0; r < n; ++r) {
        const auto row = ds.features.row(r);
        for (std::size_t j = 0; j < p; ++j) centered[j] = row[j] - mean[j];
        for (std::size_t j = 0; j < p; ++j)
            for (std::size_t l = 0; l <= j; ++l) cov.at(j, l) += centered[j] * centered[l];
    }
    for (std::size_t j = 0; j < p; ++j)
        for (std::size_t l = 0; l <= j; ++l) {
            cov.at(j, l) /= static_cast<double>(n);
            cov.at(l, j) = cov.at(j, l);
        }

    double total_variance = 0.0;
    for (std::size_t j = 0; j < p; ++j) total_variance += cov.at(j, j);

    PcaResult result;
    result.components = Matrix(static_cast<std::size_t>(k), p);
    result.explained_variance_ratio.resize(static_cast<std::size_t>(k));

    std::vector<double> v(p), next(p);
    for (int comp = 0; comp < k; ++comp) {
        Rng rng(0x9CA0 + static_cast<std::uint64_t>(comp));
        double norm = 0.0;
        for (std::size_t j = 0; j < p; ++j) {
            v[j] = rng.uniform(-1.0, 1.0);
            norm += v[j] * v[j];
        }
        for (std::size_t j = 0; j < p; ++j) v[j] /= std::sqrt(norm);

        double eigenvalue = 0.0;
        bool converged = false;
        for (int iter = 0; iter < 1000; ++iter) {
            for (std::size_t j = 0; j < p; ++j) {
                double s = 0.0;
                for (std::size_t l = 0; l < p; ++l) s += cov.at(j, l) * v[l];
                next[j] = s;
            }
            double next_norm = 0.0;
            for (double x : next) next_norm += x * x;
            next_norm = std::sqrt(next_norm);
            if (next_norm < 1e-300 || next_norm < 1e-15 * std::max(total_variance, 1.0)) {
                // Remaining spectrum is numerically zero.
                eigenvalue = 0.0;
                converged = true;
                break;
            }
            double delta = 0.0;
            for (std::size_t j = 0; j < p; ++j) {
                next[j] /= next_norm;
                delta = std::max(delta, std::abs(next[j] - v[j]));
            }
            // Sign flips between iterations are convergence too.
            double delta_neg = 0.0;
            for (std::size_t j = 0; j < p; ++j) delta_neg = std::max(delta_neg, std::abs(next[j] + v[j]));
            v.swap(next);
            eigenvalue = next_norm;
            if (std::min(delta, delta_neg) < 1e-9) {
                converged = true;
                break;
            }
        }
        if (!converged) throw ConvergenceFailure("pca power iteration failed to converge for component " +
                                                 std::to_string(comp + 1));

        for (std::size_t j = 0; j < p; ++j) result.components.at(static_cast<std::size_t>(comp), j) = v[j];
        result.explained_variance_ratio[static_cast<std::size_t>(comp)] =
            total_variance > 0.0 ? eigenvalue / total_variance : 0.0;

        // Deflate.
        for (std::size_t j = 0; j < p; ++j)
            for (std::size_t l = 0; l < p; ++l) cov.at(j, l) -= eigenvalue * v[j] * v[l];
    }

    result.scores = Matrix(n, static_cast<std::size_t>(k));
    for (std::size_t r = 0; r < n; ++r) {
        const auto row = ds.features.row(r);
        for (int comp = 0; comp < k; ++comp) {
            double s = 0.0;
            for (std::size_t j = 0; j < p; ++j)
                s += (row[j] - mean[j]) * result.components.at(static_cast<std::size_t>(comp), j);
            result.scores.at(r, static_cast<std::size_t>(comp)) = s;
        }
    }
    return result;
}

}  // namespace nutriscreen
