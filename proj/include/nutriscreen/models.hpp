#pragma once

#include <memory>
#include <span>
#include <string>
#include <vector>

#include "nutriscreen/data_model.hpp"
#include "json.hpp"

namespace nutriscreen {

struct DimensionMismatch : ValidationError {
    using ValidationError::ValidationError;
};
struct KLargerThanTrainingSet : ValidationError {
    using ValidationError::ValidationError;
};
struct SingularCovariance : ValidationError {
    using ValidationError::ValidationError;
};
struct WrongArchitecture : ValidationError {
    using ValidationError::ValidationError;
};
struct DivergenceDetected : Error {
    using Error::Error;
};

// Uniform probabilistic classifier artifact. score_row returns P(class 1) in
// [0,1]; predict thresholds at 0.5 by default with ties going to class 1
// (missing a malnourished child costs more than a false alarm).
class TrainedModel {
public:
    virtual ~TrainedModel() = default;

    virtual std::string family() const = 0;
    virtual double score_row(std::span<const double> row) const = 0;
    virtual nlohmann::json to_json() const = 0;

    virtual std::vector<double> score_matrix(const Matrix& X) const {
        std::vector<double> out(X.rows);
        for (std::size_t r = 0; r < X.rows; ++r) out[r] = score_row(X.row(r));
        return out;
    }

    int predict(std::span<const double> row, double threshold = 0.5) const {
        return score_row(row) >= threshold ? 1 : 0;
    }
};

// Deserializes any model saved by to_json (dispatches on the "family" tag).
std::unique_ptr<TrainedModel> model_from_json(const nlohmann::json& doc);

}  // namespace nutriscreen
