#include "nutriscreen/models.hpp"

#include "nutriscreen/nn.hpp"

namespace nutriscreen {

// Family-specific loaders, defined alongside their models.
std::unique_ptr<TrainedModel> classic_model_from_json(const nlohmann::json& doc);
std::unique_ptr<TrainedModel> boosting_model_from_json(const nlohmann::json& doc);

std::unique_ptr<TrainedModel> model_from_json(const nlohmann::json& doc) {
    if (!doc.contains("family")) throw ValidationError("model JSON has no family tag");
    if (auto m = classic_model_from_json(doc)) return m;
    if (auto m = boosting_model_from_json(doc)) return m;
    if (auto m = nn_model_from_json(doc)) return m;
    throw ValidationError("unknown model family: " + doc.at("family").get<std::string>());
}

}  // namespace nutriscreen
