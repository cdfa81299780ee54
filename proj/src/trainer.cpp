#include "varenn/trainer.hpp"

#include <cmath>
#include <limits>
#include <numeric>
#include <sstream>

#include "binary_io.hpp"
#include "text_util.hpp"
#include "varenn/error.hpp"
#include "varenn/rng.hpp"

namespace varenn {

namespace {

constexpr std::size_t kEvalBatch = 64;

std::size_t input_size(const NetShape& s) {
    return static_cast<std::size_t>(s.input_h) * static_cast<std::size_t>(s.input_w) *
           static_cast<std::size_t>(s.input_c);
}

template <typename T>
T to_input(float x, bool quantize) {
    return quantize ? static_cast<T>(quantize_byte(x)) / T(255) : static_cast<T>(x);
}

template <typename T>
void load_batch(std::span<const float> images, std::span<const std::size_t> rows, std::size_t in_size,
                bool quantize, std::vector<T>& out) {
    out.resize(rows.size() * in_size);
    for (std::size_t b = 0; b < rows.size(); ++b) {
        const float* src = images.data() + rows[b] * in_size;
        T* dst = out.data() + b * in_size;
        for (std::size_t k = 0; k < in_size; ++k) dst[k] = to_input<T>(src[k], quantize);
    }
}

int argmax_row(const double* p, std::size_t k) {
    std::size_t best = 0;
    for (std::size_t j = 1; j < k; ++j)
        if (p[j] > p[best]) best = j;
    return static_cast<int>(best);
}

void check_images(std::span<const float> images, std::size_t n, std::size_t in_size, const char* what) {
    if (images.size() != n * in_size)
        throw ShapeError(std::string("input: ") + what + " holds " + std::to_string(images.size()) +
                         " values, expected " + std::to_string(n) + " images of " + std::to_string(in_size));
}

}  // namespace

std::string TrainingLog::format() const {
    std::ostringstream out;
    out << "epoch\tlr\ttrain_loss\tval_loss\tval_accuracy\n";
    for (const auto& e : epochs)
        out << e.epoch << '\t' << detail::format_double(e.lr) << '\t' << detail::format_double(e.train_loss) << '\t'
            << detail::format_double(e.val_loss) << '\t' << detail::format_double(e.val_accuracy) << '\n';
    return out.str();
}

LabeledImages gather_split(const DatasetManifest& m, const ImageCache& cache, Split s, std::vector<float>& storage) {
    const auto idx = m.indices(s);
    storage.clear();
    storage.reserve(idx.size() * kImageValues);
    LabeledImages out;
    out.labels.reserve(idx.size());
    for (std::size_t i : idx) {
        const auto& r = m.records[i];
        if (r.image_ref >= cache.count())
            throw ConsistencyError("record image offset " + std::to_string(r.image_ref) + " exceeds the cache size " +
                                   std::to_string(cache.count()));
        const auto img = cache.image(r.image_ref);
        storage.insert(storage.end(), img.begin(), img.end());
        out.labels.push_back(r.label.class_index());
    }
    out.images = storage;
    return out;
}

template <typename T>
std::pair<double, double> evaluate_loss(const LeNetParams<T>& params, const LabeledImages& data, bool quantize_input) {
    const std::size_t n = data.size();
    if (n == 0) return {std::numeric_limits<double>::quiet_NaN(), std::numeric_limits<double>::quiet_NaN()};
    const std::size_t in_size = input_size(params.shape);
    check_images(data.images, n, in_size, "evaluation set");
    std::vector<T> buf;
    std::vector<std::size_t> rows;
    double loss_sum = 0.0;
    std::size_t correct = 0;
    for (std::size_t start = 0; start < n; start += kEvalBatch) {
        const std::size_t count = std::min(kEvalBatch, n - start);
        rows.resize(count);
        std::iota(rows.begin(), rows.end(), start);
        load_batch<T>(data.images, rows, in_size, quantize_input, buf);
        const Tensor<T> logits = forward(params, std::span<const T>(buf), count);
        const std::span<const int> labels(data.labels.data() + start, count);
        loss_sum += static_cast<double>(loss_softmax_ce(logits, labels).loss) * static_cast<double>(count);
        const auto probs = softmax_rows(logits);
        const std::size_t k = logits.shape[1];
        std::vector<double> row(k);
        for (std::size_t i = 0; i < count; ++i) {
            for (std::size_t j = 0; j < k; ++j) row[j] = static_cast<double>(probs[i * k + j]);
            if (argmax_row(row.data(), k) == labels[i]) ++correct;
        }
    }
    return {loss_sum / static_cast<double>(n), static_cast<double>(correct) / static_cast<double>(n)};
}

template <typename T>
LeNetParams<T> fit(const LabeledImages& train, const LabeledImages& val, const TrainConfig& cfg, TrainingLog* log) {
    cfg.validate();
    const std::size_t n = train.size();
    if (n == 0) throw DatasetError("empty training split");
    const std::size_t in_size = input_size(cfg.net);
    check_images(train.images, n, in_size, "training set");

    LeNetParams<T> params = LeNetParams<T>::initialize(cfg.net, cfg.seed);
    LeNetParams<T> grad;
    LeNetParams<T> velocity;
    if (cfg.momentum > 0.0) velocity = LeNetParams<T>::zeros(cfg.net);

    const std::size_t batch = static_cast<std::size_t>(cfg.batch_size);
    std::vector<std::size_t> order(n);
    std::vector<T> buf;
    std::vector<int> labels;
    for (int epoch = 0; epoch < cfg.epochs; ++epoch) {
        std::iota(order.begin(), order.end(), std::size_t{0});
        RandomStream rng(cfg.seed, StreamTag::epoch_shuffle, {static_cast<std::uint64_t>(epoch)});
        rng.shuffle(std::span<std::size_t>(order));
        const double lr = lr_schedule(epoch, cfg);
        double loss_sum = 0.0;
        for (std::size_t start = 0; start < n; start += batch) {
            const std::size_t count = std::min(batch, n - start);
            const std::span<const std::size_t> rows(order.data() + start, count);
            load_batch<T>(train.images, rows, in_size, cfg.quantize_input, buf);
            labels.resize(count);
            for (std::size_t b = 0; b < count; ++b) labels[b] = train.labels[rows[b]];
            const T loss = batch_gradient(params, std::span<const T>(buf), std::span<const int>(labels), cfg.workers, grad);
            sgd_step(params, grad, lr, cfg.momentum, cfg.momentum > 0.0 ? &velocity : nullptr);
            loss_sum += static_cast<double>(loss) * static_cast<double>(count);
        }
        if (log) {
            const auto [val_loss, val_acc] = evaluate_loss(params, val, cfg.quantize_input);
            log->epochs.push_back({epoch, lr, loss_sum / static_cast<double>(n), val_loss, val_acc});
        }
    }
    return params;
}

TrainResult train(const DatasetManifest& m, const ImageCache& cache, const TrainConfig& cfg) {
    std::vector<float> train_store, val_store;
    const LabeledImages tr = gather_split(m, cache, Split::train, train_store);
    const LabeledImages va = gather_split(m, cache, Split::validation, val_store);
    if (tr.size() == 0) throw DatasetError("manifest has an empty train split");
    if (va.size() == 0) throw DatasetError("manifest has an empty validation split");
    TrainResult out;
    if (cfg.precision == Precision::real32)
        out.model = fit<float>(tr, va, cfg, &out.log);
    else
        out.model = fit<double>(tr, va, cfg, &out.log);
    return out;
}

template <typename T>
Prediction predict(const LeNetParams<T>& params, std::span<const float> images, bool quantize_input) {
    const std::size_t in_size = input_size(params.shape);
    if (images.size() % in_size != 0) throw ShapeError("input: image buffer is not a whole number of images");
    const std::size_t n = images.size() / in_size;
    Prediction out;
    out.classes = static_cast<std::size_t>(params.shape.classes);
    out.labels.reserve(n);
    out.probabilities.reserve(n * out.classes);
    std::vector<T> buf;
    std::vector<std::size_t> rows;
    for (std::size_t start = 0; start < n; start += kEvalBatch) {
        const std::size_t count = std::min(kEvalBatch, n - start);
        rows.resize(count);
        std::iota(rows.begin(), rows.end(), start);
        load_batch<T>(images, rows, in_size, quantize_input, buf);
        const auto probs = softmax_rows(forward(params, std::span<const T>(buf), count));
        for (T p : probs) out.probabilities.push_back(static_cast<double>(p));
        for (std::size_t i = 0; i < count; ++i)
            out.labels.push_back(argmax_row(out.probabilities.data() + (start + i) * out.classes, out.classes));
    }
    return out;
}

Prediction predict(const Model& model, std::span<const float> images, bool quantize_input) {
    return std::visit([&](const auto& p) { return predict(p, images, quantize_input); }, model);
}

void save_model(const Model& model, const std::filesystem::path& path) {
    std::visit([&](const auto& p) { save_checkpoint(p, path); }, model);
}

std::vector<std::uint8_t> encode_model(const Model& model) {
    return std::visit([](const auto& p) { return encode_checkpoint(p); }, model);
}

Model load_model(const std::filesystem::path& path) {
    const int bytes = checkpoint_scalar_bytes(path);
    if (bytes == 4) return load_checkpoint<float>(path);
    if (bytes == 8) return load_checkpoint<double>(path);
    throw FormatError("checkpoint scalar width " + std::to_string(bytes) + " is neither 4 nor 8");
}

const NetShape& model_shape(const Model& model) {
    return std::visit([](const auto& p) -> const NetShape& { return p.shape; }, model);
}

template LeNetParams<float> fit(const LabeledImages&, const LabeledImages&, const TrainConfig&, TrainingLog*);
template LeNetParams<double> fit(const LabeledImages&, const LabeledImages&, const TrainConfig&, TrainingLog*);
template Prediction predict(const LeNetParams<float>&, std::span<const float>, bool);
template Prediction predict(const LeNetParams<double>&, std::span<const float>, bool);
template std::pair<double, double> evaluate_loss(const LeNetParams<float>&, const LabeledImages&, bool);
template std::pair<double, double> evaluate_loss(const LeNetParams<double>&, const LabeledImages&, bool);

}  // namespace varenn
