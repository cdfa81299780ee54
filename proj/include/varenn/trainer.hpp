#pragma once

#include <filesystem>
#include <span>
#include <string>
#include <variant>
#include <vector>

#include "varenn/dataset.hpp"
#include "varenn/encoder.hpp"
#include "varenn/lenet.hpp"
#include "varenn/train_config.hpp"

namespace varenn {

struct EpochLog {
    int epoch = 0;
    double lr = 0.0;
    double train_loss = 0.0;
    double val_loss = 0.0;
    double val_accuracy = 0.0;
};

struct TrainingLog {
    std::vector<EpochLog> epochs;
    /// Tab-separated: epoch lr train_loss val_loss val_accuracy, with a header line.
    std::string format() const;
};

using Model = std::variant<LeNetParams<float>, LeNetParams<double>>;

/// Images (n × input size, [row][col][channel]) with 0-based class labels.
struct LabeledImages {
    std::span<const float> images;
    std::vector<int> labels;
    std::size_t size() const { return labels.size(); }
};

/// Gathers the images and class indices of one split.
LabeledImages gather_split(const DatasetManifest& m, const ImageCache& cache, Split s, std::vector<float>& storage);

/// Minibatch SGD with a seeded per-epoch shuffle and lr = base_lr * gamma^epoch.
/// Returns the final-epoch parameters. `val` may be empty, in which case its log columns are NaN.
template <typename T>
LeNetParams<T> fit(const LabeledImages& train, const LabeledImages& val, const TrainConfig& cfg,
                   TrainingLog* log = nullptr);

struct TrainResult {
    Model model;
    TrainingLog log;
};

/// Trains on the manifest's train split and logs validation metrics each epoch.
/// Throws DatasetError if the train or validation split is empty.
TrainResult train(const DatasetManifest& m, const ImageCache& cache, const TrainConfig& cfg);

struct Prediction {
    std::vector<int> labels;            ///< argmax; ties go to the lower class index
    std::vector<double> probabilities;  ///< [n][classes]
    std::size_t classes = 0;
};

template <typename T>
Prediction predict(const LeNetParams<T>& params, std::span<const float> images, bool quantize_input = true);
Prediction predict(const Model& model, std::span<const float> images, bool quantize_input = true);

/// Mean cross-entropy and accuracy of the model on labeled images.
template <typename T>
std::pair<double, double> evaluate_loss(const LeNetParams<T>& params, const LabeledImages& data, bool quantize_input);

void save_model(const Model& model, const std::filesystem::path& path);
Model load_model(const std::filesystem::path& path);
std::vector<std::uint8_t> encode_model(const Model& model);
const NetShape& model_shape(const Model& model);

}  // namespace varenn
