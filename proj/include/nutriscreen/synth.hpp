#pragma once

#include <optional>
#include <string>
#include <vector>

#include "nutriscreen/csv.hpp"
#include "nutriscreen/preprocess.hpp"

namespace nutriscreen {

struct MarginalCategory {
    std::string value;         // raw cell text the generator emits
    std::string label;         // human-readable name ("poorest", "higher", ...)
    double probability = 0.0;  // category share
    double malnutrition_rate = 0.0;
};

struct MarginalFeature {
    std::string column;
    std::vector<MarginalCategory> categories;
};

// Per-feature category shares and conditional malnutrition rates. The
// builtin instance transcribes the survey's published characteristic table.
struct MarginalSpec {
    std::vector<MarginalFeature> features;
    std::size_t n_default = 6416;
    std::string default_stratifier = "wealth_index";

    void validate() const;  // probabilities sum to 1 (1e-9), rates in [0,1]
    const MarginalFeature& feature(const std::string& column) const;
    // Lookup by category label or raw value.
    double rate(const std::string& column, const std::string& category) const;
    double share(const std::string& column, const std::string& category) const;
    // Sum of share * conditional rate for one stratifier.
    double implied_prevalence(const std::string& stratifier) const;
};

MarginalSpec builtin_marginals();

// Planted logistic signal over encoded features. The intercept is calibrated
// by simulation so the realized prevalence lands within +-0.02 of target.
struct SignalSpec {
    std::vector<std::pair<std::string, double>> coefficients;  // encoded feature name -> log-odds
    double target_prevalence = 2745.0 / 6416.0;
    std::optional<double> intercept;  // filled in by calibration when absent

    // Strong default signal; separable enough for capable models to reach
    // high AUC at a few thousand rows.
    static SignalSpec builtin_strong();
};

// Draws one row per derived row seed: features independently from the
// marginals; the label either from the stratifier's conditional rate
// (marginal mode, signal == nullopt) or from the logistic signal; z-score
// columns are then sampled consistently with the label so the standard
// pipeline re-derives it.
RawTable generate(const MarginalSpec& spec, std::optional<SignalSpec> signal, std::size_t n, std::uint64_t seed);

}  // namespace nutriscreen
