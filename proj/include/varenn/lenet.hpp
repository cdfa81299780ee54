#pragma once

// LeNet-style classifier: conv -> act -> maxpool -> conv -> act -> maxpool -> fc -> act -> fc.
//
// Images enter as [row][col][channel] (the image-cache layout) and are
// re-laid as [channel][row][col] internally. Convolutions are "valid" with
// stride 1; pooling is 2×2 with stride 2. Weights are row-major:
//   conv_w [filters][in_channels][k][k], fc_w [out][in].

#include <array>
#include <cstdint>
#include <filesystem>
#include <functional>
#include <span>
#include <vector>

#include "varenn/train_config.hpp"

namespace varenn {

template <typename T>
struct Tensor {
    std::vector<std::size_t> shape;
    std::vector<T> data;

    Tensor() = default;
    explicit Tensor(std::vector<std::size_t> s, T fill = T(0));

    std::size_t size() const { return data.size(); }
    friend bool operator==(const Tensor&, const Tensor&) = default;
};

/// Spatial sizes along the layer chain; throws ShapeError naming the offending layer.
struct LayerDims {
    int conv1_h, conv1_w;
    int pool1_h, pool1_w;
    int conv2_h, conv2_w;
    int pool2_h, pool2_w;
    int flat;
};
LayerDims compute_dims(const NetShape& shape);

template <typename T>
struct LeNetParams {
    NetShape shape;
    Tensor<T> conv1_w, conv1_b, conv2_w, conv2_b, fc1_w, fc1_b, fc2_w, fc2_b;
    /// Bumped on every in-place update; forward caches record it.
    std::uint64_t version = 0;

    static LeNetParams zeros(const NetShape& shape);
    /// Fan-in scaled uniform weights U(-sqrt(3/fan_in), sqrt(3/fan_in)), zero biases.
    static LeNetParams initialize(const NetShape& shape, std::uint64_t seed);

    std::array<Tensor<T>*, 8> tensors();
    std::array<const Tensor<T>*, 8> tensors() const;
    std::size_t parameter_count() const;

    bool same_values(const LeNetParams& o) const;
};

/// Activations kept by forward() for backward().
template <typename T>
struct ForwardCache {
    std::size_t batch = 0;
    std::uint64_t params_version = 0;
    const void* params_identity = nullptr;
    std::vector<T> cols1, conv1_act, pool1;
    std::vector<std::int32_t> pool1_arg;
    std::vector<T> cols2, conv2_act, pool2;
    std::vector<std::int32_t> pool2_arg;
    std::vector<T> fc1_act;
};

/// Intermediate sizes of the last forward pass, for shape checks in tests.
struct ShapeTrace {
    std::array<int, 3> conv1, pool1, conv2, pool2;
    int flat = 0, fc1 = 0, logits = 0;
};

/// Logits [n][classes]. `images` holds n images in [row][col][channel] layout.
/// Throws ShapeError if the buffer size does not match n images of the network's input shape.
template <typename T>
Tensor<T> forward(const LeNetParams<T>& params, std::span<const T> images, std::size_t n,
                  ForwardCache<T>* cache = nullptr, ShapeTrace* trace = nullptr);

template <typename T>
struct LossResult {
    T loss = 0;       ///< mean cross-entropy over the batch
    Tensor<T> dlogits;
};

/// Mean softmax cross-entropy (max-subtracted) and its gradient. Labels are 0-based.
/// Throws DomainError on labels outside [0, classes).
template <typename T>
LossResult<T> loss_softmax_ce(const Tensor<T>& logits, std::span<const int> labels);

/// Gradients of every parameter, returned in a params-shaped struct.
/// Throws ConsistencyError if the cache was produced by other parameters or an older version.
template <typename T>
LeNetParams<T> backward(const LeNetParams<T>& params, const ForwardCache<T>& cache, const Tensor<T>& dlogits);

template <typename T>
std::vector<T> softmax_rows(const Tensor<T>& logits);

/// base_lr * decay_gamma^epoch
double lr_schedule(int epoch, const TrainConfig& cfg);

/// Mean loss and gradient over a batch, computed in fixed chunks whose sum is
/// reduced in chunk order, so the result is independent of `workers`.
template <typename T>
T batch_gradient(const LeNetParams<T>& params, std::span<const T> images, std::span<const int> labels,
                 int workers, LeNetParams<T>& grad);

/// In-place SGD step: velocity = momentum*velocity - lr*grad; params += velocity.
template <typename T>
void sgd_step(LeNetParams<T>& params, const LeNetParams<T>& grad, double lr, double momentum,
              LeNetParams<T>* velocity);

/// Checkpoint file (little-endian):
///   "VLNT1\0" | u8 scalar bytes (4|8) | i32 x 9 shape fields | u8 activation |
///   8 × (u32 rank | u32 dims[rank] | scalar values)
template <typename T>
void save_checkpoint(const LeNetParams<T>& params, const std::filesystem::path& path);
template <typename T>
std::vector<std::uint8_t> encode_checkpoint(const LeNetParams<T>& params);
/// Scalar width stored in a checkpoint (4 or 8).
int checkpoint_scalar_bytes(const std::filesystem::path& path);
template <typename T>
LeNetParams<T> load_checkpoint(const std::filesystem::path& path);

}  // namespace varenn
