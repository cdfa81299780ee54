#include "varenn/lenet.hpp"

#include <Eigen/Core>

#include <algorithm>
#include <cmath>
#include <numeric>
#include <string>
#include <thread>

#include "binary_io.hpp"
#include "varenn/error.hpp"
#include "varenn/rng.hpp"

namespace varenn {

namespace {

template <typename T>
using RowMat = Eigen::Matrix<T, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
template <typename T>
using MatMap = Eigen::Map<RowMat<T>>;
template <typename T>
using ConstMatMap = Eigen::Map<const RowMat<T>>;
template <typename T>
using ConstVecMap = Eigen::Map<const Eigen::Matrix<T, Eigen::Dynamic, 1>>;

constexpr std::size_t kGradientChunk = 16;
constexpr std::string_view kCheckpointMagic{"VLNT1\0", 6};

std::size_t sz(int v) { return static_cast<std::size_t>(v); }

template <typename T>
void im2col(const T* x, int c_in, int h, int w, int k, int oh, int ow, T* cols) {
    const std::size_t p = sz(oh) * sz(ow);
    for (int c = 0; c < c_in; ++c)
        for (int ky = 0; ky < k; ++ky)
            for (int kx = 0; kx < k; ++kx) {
                T* dst = cols + sz((c * k + ky) * k + kx) * p;
                for (int oy = 0; oy < oh; ++oy) {
                    const T* src = x + sz(c) * sz(h) * sz(w) + sz(oy + ky) * sz(w) + sz(kx);
                    std::copy(src, src + ow, dst + sz(oy) * sz(ow));
                }
            }
}

// Plain left-to-right sums. Eigen's vectorized reductions peel by address alignment,
// which made bias gradients differ between otherwise identical runs.
template <typename T>
void add_row_sums(const T* m, int rows, std::size_t cols, T* out) {
    for (int r = 0; r < rows; ++r) {
        T acc = 0;
        const T* row = m + sz(r) * cols;
        for (std::size_t j = 0; j < cols; ++j) acc += row[j];
        out[r] += acc;
    }
}

template <typename T>
void add_col_sums(const T* m, std::size_t rows, std::size_t cols, T* out) {
    for (std::size_t i = 0; i < rows; ++i)
        for (std::size_t j = 0; j < cols; ++j) out[j] += m[i * cols + j];
}

template <typename T>
void col2im_add(const T* cols, int c_in, int h, int w, int k, int oh, int ow, T* dx) {
    const std::size_t p = sz(oh) * sz(ow);
    for (int c = 0; c < c_in; ++c)
        for (int ky = 0; ky < k; ++ky)
            for (int kx = 0; kx < k; ++kx) {
                const T* src = cols + sz((c * k + ky) * k + kx) * p;
                for (int oy = 0; oy < oh; ++oy) {
                    T* dst = dx + sz(c) * sz(h) * sz(w) + sz(oy + ky) * sz(w) + sz(kx);
                    const T* row = src + sz(oy) * sz(ow);
                    for (int ox = 0; ox < ow; ++ox) dst[ox] += row[ox];
                }
            }
}

/// 2×2 stride-2 max pooling; ties resolve to the first position in row-major order.
template <typename T>
void maxpool(const T* in, int c_in, int h, int w, T* out, std::int32_t* arg) {
    const int oh = h / 2, ow = w / 2;
    for (int c = 0; c < c_in; ++c) {
        const std::size_t plane = sz(c) * sz(h) * sz(w);
        for (int oy = 0; oy < oh; ++oy)
            for (int ox = 0; ox < ow; ++ox) {
                std::size_t best = plane + sz(2 * oy) * sz(w) + sz(2 * ox);
                for (int dy = 0; dy < 2; ++dy)
                    for (int dx = 0; dx < 2; ++dx) {
                        const std::size_t idx = plane + sz(2 * oy + dy) * sz(w) + sz(2 * ox + dx);
                        if (in[idx] > in[best]) best = idx;
                    }
                const std::size_t o = (sz(c) * sz(oh) + sz(oy)) * sz(ow) + sz(ox);
                out[o] = in[best];
                arg[o] = static_cast<std::int32_t>(best);
            }
    }
}

template <typename T>
void activate(T* x, std::size_t n, Activation a) {
    if (a == Activation::relu) {
        for (std::size_t i = 0; i < n; ++i) x[i] = x[i] > T(0) ? x[i] : T(0);
    } else {
        for (std::size_t i = 0; i < n; ++i) x[i] = std::tanh(x[i]);
    }
}

/// Multiplies the upstream gradient by the activation derivative, expressed through the output.
template <typename T>
void activation_backward(T* grad, const T* act, std::size_t n, Activation a) {
    if (a == Activation::relu) {
        for (std::size_t i = 0; i < n; ++i)
            if (!(act[i] > T(0))) grad[i] = T(0);
    } else {
        for (std::size_t i = 0; i < n; ++i) grad[i] *= T(1) - act[i] * act[i];
    }
}

template <typename T>
LossResult<T> softmax_ce(const Tensor<T>& logits, std::span<const int> labels, double normalizer) {
    const std::size_t n = logits.shape.at(0), k = logits.shape.at(1);
    if (labels.size() != n) throw ShapeError("loss: " + std::to_string(labels.size()) + " labels for " +
                                             std::to_string(n) + " logit rows");
    LossResult<T> out;
    out.dlogits = Tensor<T>({n, k});
    double total = 0.0;
    for (std::size_t i = 0; i < n; ++i) {
        const int y = labels[i];
        if (y < 0 || static_cast<std::size_t>(y) >= k)
            throw DomainError("label " + std::to_string(y) + " outside [0, " + std::to_string(k) + ")");
        const T* z = logits.data.data() + i * k;
        const T zmax = *std::max_element(z, z + k);
        double sum = 0.0;
        for (std::size_t j = 0; j < k; ++j) sum += std::exp(static_cast<double>(z[j] - zmax));
        const double log_sum = std::log(sum);
        total += log_sum - static_cast<double>(z[static_cast<std::size_t>(y)] - zmax);
        for (std::size_t j = 0; j < k; ++j) {
            const double p = std::exp(static_cast<double>(z[j] - zmax) - log_sum);
            out.dlogits.data[i * k + j] = static_cast<T>((p - (static_cast<int>(j) == y ? 1.0 : 0.0)) / normalizer);
        }
    }
    out.loss = static_cast<T>(total / static_cast<double>(n));
    return out;
}

template <typename T>
void add_into(LeNetParams<T>& acc, const LeNetParams<T>& g) {
    auto dst = acc.tensors();
    auto src = g.tensors();
    for (std::size_t t = 0; t < dst.size(); ++t) {
        auto& d = dst[t]->data;
        const auto& s = src[t]->data;
        for (std::size_t i = 0; i < d.size(); ++i) d[i] += s[i];
    }
}

}  // namespace

const char* to_string(Precision p) { return p == Precision::real32 ? "real32" : "real64"; }

Precision parse_precision(std::string_view s) {
    if (s == "real32") return Precision::real32;
    if (s == "real64") return Precision::real64;
    throw ConfigError("unknown precision '" + std::string(s) + "'");
}

const char* to_string(Activation a) { return a == Activation::relu ? "relu" : "tanh"; }

Activation parse_activation(std::string_view s) {
    if (s == "relu") return Activation::relu;
    if (s == "tanh") return Activation::tanh;
    throw ConfigError("unknown activation '" + std::string(s) + "'");
}

void TrainConfig::validate() const {
    if (epochs < 1) throw ConfigError("epochs must be at least 1");
    if (!(decay_gamma > 0.0 && decay_gamma <= 1.0)) throw ConfigError("decay_gamma must be in (0, 1]");
    if (batch_size < 1) throw ConfigError("batch_size must be at least 1");
    if (!(base_lr >= 0.0)) throw ConfigError("base_lr must be non-negative");
    if (!(momentum >= 0.0 && momentum < 1.0)) throw ConfigError("momentum must be in [0, 1)");
    if (workers < 1) throw ConfigError("workers must be at least 1");
    compute_dims(net);
}

template <typename T>
Tensor<T>::Tensor(std::vector<std::size_t> s, T fill) : shape(std::move(s)) {
    data.assign(std::accumulate(shape.begin(), shape.end(), std::size_t{1}, std::multiplies<>()), fill);
}

LayerDims compute_dims(const NetShape& s) {
    auto positive = [](int v, const char* what) {
        if (v < 1) throw ShapeError(std::string(what) + " must be positive");
    };
    positive(s.input_h, "input height");
    positive(s.input_w, "input width");
    positive(s.input_c, "input channels");
    positive(s.conv1_filters, "conv1 filters");
    positive(s.conv1_kernel, "conv1 kernel");
    positive(s.conv2_filters, "conv2 filters");
    positive(s.conv2_kernel, "conv2 kernel");
    positive(s.fc1_units, "fc1 units");
    positive(s.classes, "classes");

    LayerDims d{};
    auto conv = [](int in, int k, const char* layer) {
        if (k > in)
            throw ShapeError(std::string(layer) + ": kernel " + std::to_string(k) + " exceeds input " + std::to_string(in));
        return in - k + 1;
    };
    auto pool = [](int in, const char* layer) {
        if (in % 2 != 0)
            throw ShapeError(std::string(layer) + ": 2x2 pooling needs an even size, got " + std::to_string(in));
        return in / 2;
    };
    d.conv1_h = conv(s.input_h, s.conv1_kernel, "conv1");
    d.conv1_w = conv(s.input_w, s.conv1_kernel, "conv1");
    d.pool1_h = pool(d.conv1_h, "pool1");
    d.pool1_w = pool(d.conv1_w, "pool1");
    d.conv2_h = conv(d.pool1_h, s.conv2_kernel, "conv2");
    d.conv2_w = conv(d.pool1_w, s.conv2_kernel, "conv2");
    d.pool2_h = pool(d.conv2_h, "pool2");
    d.pool2_w = pool(d.conv2_w, "pool2");
    d.flat = s.conv2_filters * d.pool2_h * d.pool2_w;
    return d;
}

template <typename T>
LeNetParams<T> LeNetParams<T>::zeros(const NetShape& shape) {
    const LayerDims d = compute_dims(shape);
    LeNetParams p;
    p.shape = shape;
    p.conv1_w = Tensor<T>({sz(shape.conv1_filters), sz(shape.input_c), sz(shape.conv1_kernel), sz(shape.conv1_kernel)});
    p.conv1_b = Tensor<T>({sz(shape.conv1_filters)});
    p.conv2_w =
        Tensor<T>({sz(shape.conv2_filters), sz(shape.conv1_filters), sz(shape.conv2_kernel), sz(shape.conv2_kernel)});
    p.conv2_b = Tensor<T>({sz(shape.conv2_filters)});
    p.fc1_w = Tensor<T>({sz(shape.fc1_units), sz(d.flat)});
    p.fc1_b = Tensor<T>({sz(shape.fc1_units)});
    p.fc2_w = Tensor<T>({sz(shape.classes), sz(shape.fc1_units)});
    p.fc2_b = Tensor<T>({sz(shape.classes)});
    return p;
}

template <typename T>
LeNetParams<T> LeNetParams<T>::initialize(const NetShape& shape, std::uint64_t seed) {
    LeNetParams p = zeros(shape);
    auto fill = [&](Tensor<T>& w, std::size_t fan_in, std::uint64_t layer) {
        RandomStream rng(seed, StreamTag::weight_init, {layer});
        const double a = std::sqrt(3.0 / static_cast<double>(fan_in));
        for (auto& x : w.data) x = static_cast<T>(rng.uniform(-a, a));
    };
    fill(p.conv1_w, p.conv1_w.size() / sz(shape.conv1_filters), 1);
    fill(p.conv2_w, p.conv2_w.size() / sz(shape.conv2_filters), 2);
    fill(p.fc1_w, p.fc1_w.shape[1], 3);
    fill(p.fc2_w, p.fc2_w.shape[1], 4);
    return p;
}

template <typename T>
std::array<Tensor<T>*, 8> LeNetParams<T>::tensors() {
    return {&conv1_w, &conv1_b, &conv2_w, &conv2_b, &fc1_w, &fc1_b, &fc2_w, &fc2_b};
}

template <typename T>
std::array<const Tensor<T>*, 8> LeNetParams<T>::tensors() const {
    return {&conv1_w, &conv1_b, &conv2_w, &conv2_b, &fc1_w, &fc1_b, &fc2_w, &fc2_b};
}

template <typename T>
std::size_t LeNetParams<T>::parameter_count() const {
    std::size_t n = 0;
    for (const auto* t : tensors()) n += t->size();
    return n;
}

template <typename T>
bool LeNetParams<T>::same_values(const LeNetParams& o) const {
    if (!(shape == o.shape)) return false;
    auto a = tensors();
    auto b = o.tensors();
    for (std::size_t i = 0; i < a.size(); ++i)
        if (!(*a[i] == *b[i])) return false;
    return true;
}

template <typename T>
Tensor<T> forward(const LeNetParams<T>& params, std::span<const T> images, std::size_t n, ForwardCache<T>* cache,
                  ShapeTrace* trace) {
    const NetShape& s = params.shape;
    const LayerDims d = compute_dims(s);
    const std::size_t in_size = sz(s.input_h) * sz(s.input_w) * sz(s.input_c);
    if (images.size() != n * in_size)
        throw ShapeError("input: expected " + std::to_string(n) + " x " + std::to_string(s.input_h) + "x" +
                         std::to_string(s.input_w) + "x" + std::to_string(s.input_c) + " values, got " +
                         std::to_string(images.size()));
    if (params.fc1_w.shape.size() != 2 || params.fc1_w.shape[1] != sz(d.flat))
        throw ShapeError("fc1: weight matrix does not match the flattened conv output");

    const std::size_t p1 = sz(d.conv1_h) * sz(d.conv1_w);
    const std::size_t ckk1 = sz(s.input_c) * sz(s.conv1_kernel) * sz(s.conv1_kernel);
    const std::size_t a1 = sz(s.conv1_filters) * p1;
    const std::size_t q1 = sz(s.conv1_filters) * sz(d.pool1_h) * sz(d.pool1_w);
    const std::size_t p2 = sz(d.conv2_h) * sz(d.conv2_w);
    const std::size_t ckk2 = sz(s.conv1_filters) * sz(s.conv2_kernel) * sz(s.conv2_kernel);
    const std::size_t a2 = sz(s.conv2_filters) * p2;
    const std::size_t flat = sz(d.flat);

    std::vector<T> x_chw(in_size);
    std::vector<T> scratch_cols1, scratch_act1, scratch_pool1, scratch_cols2, scratch_act2;
    std::vector<std::int32_t> scratch_arg1, scratch_arg2;
    std::vector<T> local_flat;
    if (cache) {
        cache->batch = n;
        cache->params_version = params.version;
        cache->params_identity = &params;
        cache->cols1.resize(n * ckk1 * p1);
        cache->conv1_act.resize(n * a1);
        cache->pool1.resize(n * q1);
        cache->pool1_arg.resize(n * q1);
        cache->cols2.resize(n * ckk2 * p2);
        cache->conv2_act.resize(n * a2);
        cache->pool2.resize(n * flat);
        cache->pool2_arg.resize(n * flat);
    } else {
        scratch_cols1.resize(ckk1 * p1);
        scratch_act1.resize(a1);
        scratch_pool1.resize(q1);
        scratch_arg1.resize(q1);
        scratch_cols2.resize(ckk2 * p2);
        scratch_act2.resize(a2);
        scratch_arg2.resize(flat);
        local_flat.resize(n * flat);
    }

    ConstMatMap<T> w1(params.conv1_w.data.data(), s.conv1_filters, static_cast<Eigen::Index>(ckk1));
    ConstVecMap<T> b1(params.conv1_b.data.data(), s.conv1_filters);
    ConstMatMap<T> w2(params.conv2_w.data.data(), s.conv2_filters, static_cast<Eigen::Index>(ckk2));
    ConstVecMap<T> b2(params.conv2_b.data.data(), s.conv2_filters);

    T* flat_base = cache ? cache->pool2.data() : local_flat.data();

    for (std::size_t i = 0; i < n; ++i) {
        const T* img = images.data() + i * in_size;
        for (int r = 0; r < s.input_h; ++r)
            for (int c = 0; c < s.input_w; ++c)
                for (int ch = 0; ch < s.input_c; ++ch)
                    x_chw[(sz(ch) * sz(s.input_h) + sz(r)) * sz(s.input_w) + sz(c)] =
                        img[(sz(r) * sz(s.input_w) + sz(c)) * sz(s.input_c) + sz(ch)];

        T* cols1 = cache ? cache->cols1.data() + i * ckk1 * p1 : scratch_cols1.data();
        T* act1 = cache ? cache->conv1_act.data() + i * a1 : scratch_act1.data();
        T* pool1 = cache ? cache->pool1.data() + i * q1 : scratch_pool1.data();
        std::int32_t* arg1 = cache ? cache->pool1_arg.data() + i * q1 : scratch_arg1.data();
        T* cols2 = cache ? cache->cols2.data() + i * ckk2 * p2 : scratch_cols2.data();
        T* act2 = cache ? cache->conv2_act.data() + i * a2 : scratch_act2.data();
        T* pool2 = flat_base + i * flat;
        std::int32_t* arg2 = cache ? cache->pool2_arg.data() + i * flat : scratch_arg2.data();

        im2col(x_chw.data(), s.input_c, s.input_h, s.input_w, s.conv1_kernel, d.conv1_h, d.conv1_w, cols1);
        MatMap<T> z1(act1, s.conv1_filters, static_cast<Eigen::Index>(p1));
        z1.noalias() = w1 * ConstMatMap<T>(cols1, static_cast<Eigen::Index>(ckk1), static_cast<Eigen::Index>(p1));
        z1.colwise() += b1;
        activate(act1, a1, s.activation);
        maxpool(act1, s.conv1_filters, d.conv1_h, d.conv1_w, pool1, arg1);

        im2col(pool1, s.conv1_filters, d.pool1_h, d.pool1_w, s.conv2_kernel, d.conv2_h, d.conv2_w, cols2);
        MatMap<T> z2(act2, s.conv2_filters, static_cast<Eigen::Index>(p2));
        z2.noalias() = w2 * ConstMatMap<T>(cols2, static_cast<Eigen::Index>(ckk2), static_cast<Eigen::Index>(p2));
        z2.colwise() += b2;
        activate(act2, a2, s.activation);
        maxpool(act2, s.conv2_filters, d.conv2_h, d.conv2_w, pool2, arg2);
    }

    const auto rows = static_cast<Eigen::Index>(n);
    ConstMatMap<T> x(flat_base, rows, static_cast<Eigen::Index>(flat));
    ConstMatMap<T> fw1(params.fc1_w.data.data(), s.fc1_units, static_cast<Eigen::Index>(flat));
    std::vector<T> local_h;
    T* h_ptr;
    if (cache) {
        cache->fc1_act.resize(n * sz(s.fc1_units));
        h_ptr = cache->fc1_act.data();
    } else {
        local_h.resize(n * sz(s.fc1_units));
        h_ptr = local_h.data();
    }
    MatMap<T> h(h_ptr, rows, s.fc1_units);
    h.noalias() = x * fw1.transpose();
    h.rowwise() += ConstVecMap<T>(params.fc1_b.data.data(), s.fc1_units).transpose();
    activate(h_ptr, n * sz(s.fc1_units), s.activation);

    Tensor<T> logits({n, sz(s.classes)});
    MatMap<T> z(logits.data.data(), rows, s.classes);
    z.noalias() = h * ConstMatMap<T>(params.fc2_w.data.data(), s.classes, s.fc1_units).transpose();
    z.rowwise() += ConstVecMap<T>(params.fc2_b.data.data(), s.classes).transpose();

    if (trace) {
        trace->conv1 = {d.conv1_h, d.conv1_w, s.conv1_filters};
        trace->pool1 = {d.pool1_h, d.pool1_w, s.conv1_filters};
        trace->conv2 = {d.conv2_h, d.conv2_w, s.conv2_filters};
        trace->pool2 = {d.pool2_h, d.pool2_w, s.conv2_filters};
        trace->flat = d.flat;
        trace->fc1 = s.fc1_units;
        trace->logits = s.classes;
    }
    return logits;
}

template <typename T>
LossResult<T> loss_softmax_ce(const Tensor<T>& logits, std::span<const int> labels) {
    if (logits.shape.size() != 2) throw ShapeError("loss: logits must be a matrix");
    return softmax_ce(logits, labels, static_cast<double>(logits.shape[0]));
}

template <typename T>
std::vector<T> softmax_rows(const Tensor<T>& logits) {
    const std::size_t n = logits.shape.at(0), k = logits.shape.at(1);
    std::vector<T> out(n * k);
    for (std::size_t i = 0; i < n; ++i) {
        const T* z = logits.data.data() + i * k;
        const T zmax = *std::max_element(z, z + k);
        double sum = 0.0;
        for (std::size_t j = 0; j < k; ++j) sum += std::exp(static_cast<double>(z[j] - zmax));
        for (std::size_t j = 0; j < k; ++j) out[i * k + j] = static_cast<T>(std::exp(static_cast<double>(z[j] - zmax)) / sum);
    }
    return out;
}

template <typename T>
LeNetParams<T> backward(const LeNetParams<T>& params, const ForwardCache<T>& cache, const Tensor<T>& dlogits) {
    if (cache.params_identity != &params || cache.params_version != params.version)
        throw ConsistencyError("forward cache was produced by different or since-updated parameters");
    const NetShape& s = params.shape;
    const LayerDims d = compute_dims(s);
    const std::size_t n = cache.batch;
    if (dlogits.shape.size() != 2 || dlogits.shape[0] != n || dlogits.shape[1] != sz(s.classes))
        throw ConsistencyError("dlogits shape does not match the cached batch");

    const std::size_t p1 = sz(d.conv1_h) * sz(d.conv1_w);
    const std::size_t ckk1 = sz(s.input_c) * sz(s.conv1_kernel) * sz(s.conv1_kernel);
    const std::size_t a1 = sz(s.conv1_filters) * p1;
    const std::size_t q1 = sz(s.conv1_filters) * sz(d.pool1_h) * sz(d.pool1_w);
    const std::size_t p2 = sz(d.conv2_h) * sz(d.conv2_w);
    const std::size_t ckk2 = sz(s.conv1_filters) * sz(s.conv2_kernel) * sz(s.conv2_kernel);
    const std::size_t a2 = sz(s.conv2_filters) * p2;
    const std::size_t flat = sz(d.flat);
    const auto rows = static_cast<Eigen::Index>(n);
    const auto units = static_cast<Eigen::Index>(s.fc1_units);

    LeNetParams<T> g = LeNetParams<T>::zeros(s);

    ConstMatMap<T> dz(dlogits.data.data(), rows, s.classes);
    ConstMatMap<T> h(cache.fc1_act.data(), rows, units);
    ConstMatMap<T> x(cache.pool2.data(), rows, static_cast<Eigen::Index>(flat));

    MatMap<T>(g.fc2_w.data.data(), s.classes, units).noalias() = dz.transpose() * h;
    add_col_sums(dlogits.data.data(), n, sz(s.classes), g.fc2_b.data.data());

    std::vector<T> dh_buf(n * sz(s.fc1_units));
    MatMap<T> dh(dh_buf.data(), rows, units);
    dh.noalias() = dz * ConstMatMap<T>(params.fc2_w.data.data(), s.classes, units);
    activation_backward(dh_buf.data(), cache.fc1_act.data(), dh_buf.size(), s.activation);

    MatMap<T>(g.fc1_w.data.data(), units, static_cast<Eigen::Index>(flat)).noalias() = dh.transpose() * x;
    add_col_sums(dh_buf.data(), n, sz(s.fc1_units), g.fc1_b.data.data());

    std::vector<T> dx_buf(n * flat);
    MatMap<T> dx(dx_buf.data(), rows, static_cast<Eigen::Index>(flat));
    dx.noalias() = dh * ConstMatMap<T>(params.fc1_w.data.data(), units, static_cast<Eigen::Index>(flat));

    ConstMatMap<T> w1(params.conv1_w.data.data(), s.conv1_filters, static_cast<Eigen::Index>(ckk1));
    ConstMatMap<T> w2(params.conv2_w.data.data(), s.conv2_filters, static_cast<Eigen::Index>(ckk2));
    MatMap<T> gw1(g.conv1_w.data.data(), s.conv1_filters, static_cast<Eigen::Index>(ckk1));
    MatMap<T> gw2(g.conv2_w.data.data(), s.conv2_filters, static_cast<Eigen::Index>(ckk2));

    std::vector<T> dconv2(a2), dcols2(ckk2 * p2), dpool1(q1), dconv1(a1);
    for (std::size_t i = 0; i < n; ++i) {
        std::fill(dconv2.begin(), dconv2.end(), T(0));
        const std::int32_t* arg2 = cache.pool2_arg.data() + i * flat;
        const T* dxi = dx_buf.data() + i * flat;
        for (std::size_t j = 0; j < flat; ++j) dconv2[static_cast<std::size_t>(arg2[j])] += dxi[j];
        activation_backward(dconv2.data(), cache.conv2_act.data() + i * a2, a2, s.activation);

        MatMap<T> dz2(dconv2.data(), s.conv2_filters, static_cast<Eigen::Index>(p2));
        ConstMatMap<T> cols2(cache.cols2.data() + i * ckk2 * p2, static_cast<Eigen::Index>(ckk2),
                             static_cast<Eigen::Index>(p2));
        gw2.noalias() += dz2 * cols2.transpose();
        add_row_sums(dconv2.data(), s.conv2_filters, p2, g.conv2_b.data.data());

        MatMap<T>(dcols2.data(), static_cast<Eigen::Index>(ckk2), static_cast<Eigen::Index>(p2)).noalias() =
            w2.transpose() * dz2;
        std::fill(dpool1.begin(), dpool1.end(), T(0));
        col2im_add(dcols2.data(), s.conv1_filters, d.pool1_h, d.pool1_w, s.conv2_kernel, d.conv2_h, d.conv2_w,
                   dpool1.data());

        std::fill(dconv1.begin(), dconv1.end(), T(0));
        const std::int32_t* arg1 = cache.pool1_arg.data() + i * q1;
        for (std::size_t j = 0; j < q1; ++j) dconv1[static_cast<std::size_t>(arg1[j])] += dpool1[j];
        activation_backward(dconv1.data(), cache.conv1_act.data() + i * a1, a1, s.activation);

        MatMap<T> dz1(dconv1.data(), s.conv1_filters, static_cast<Eigen::Index>(p1));
        ConstMatMap<T> cols1(cache.cols1.data() + i * ckk1 * p1, static_cast<Eigen::Index>(ckk1),
                             static_cast<Eigen::Index>(p1));
        gw1.noalias() += dz1 * cols1.transpose();
        add_row_sums(dconv1.data(), s.conv1_filters, p1, g.conv1_b.data.data());
    }
    (void)w1;
    return g;
}

double lr_schedule(int epoch, const TrainConfig& cfg) { return cfg.base_lr * std::pow(cfg.decay_gamma, epoch); }

template <typename T>
T batch_gradient(const LeNetParams<T>& params, std::span<const T> images, std::span<const int> labels, int workers,
                 LeNetParams<T>& grad) {
    const std::size_t n = labels.size();
    if (n == 0) throw DatasetError("empty batch");
    const std::size_t in_size = sz(params.shape.input_h) * sz(params.shape.input_w) * sz(params.shape.input_c);
    if (images.size() != n * in_size) throw ShapeError("input: batch buffer does not match label count");
    const std::size_t chunks = (n + kGradientChunk - 1) / kGradientChunk;

    auto run_chunk = [&](std::size_t c, LeNetParams<T>& out) -> double {
        const std::size_t begin = c * kGradientChunk;
        const std::size_t count = std::min(kGradientChunk, n - begin);
        ForwardCache<T> cache;
        const Tensor<T> logits = forward(params, images.subspan(begin * in_size, count * in_size), count, &cache);
        LossResult<T> loss = softmax_ce(logits, labels.subspan(begin, count), static_cast<double>(n));
        out = backward(params, cache, loss.dlogits);
        return static_cast<double>(loss.loss) * static_cast<double>(count);
    };

    grad = LeNetParams<T>::zeros(params.shape);
    double loss_sum = 0.0;
    const std::size_t threads = std::min<std::size_t>(static_cast<std::size_t>(std::max(workers, 1)), chunks);
    if (threads <= 1) {
        LeNetParams<T> chunk_grad;
        for (std::size_t c = 0; c < chunks; ++c) {
            loss_sum += run_chunk(c, chunk_grad);
            add_into(grad, chunk_grad);
        }
    } else {
        std::vector<LeNetParams<T>> partial(chunks);
        std::vector<double> losses(chunks, 0.0);
        std::vector<std::thread> pool;
        std::vector<std::exception_ptr> errors(threads);
        for (std::size_t w = 0; w < threads; ++w)
            pool.emplace_back([&, w] {
                try {
                    for (std::size_t c = w; c < chunks; c += threads) losses[c] = run_chunk(c, partial[c]);
                } catch (...) {
                    errors[w] = std::current_exception();
                }
            });
        for (auto& t : pool) t.join();
        for (auto& e : errors)
            if (e) std::rethrow_exception(e);
        for (std::size_t c = 0; c < chunks; ++c) {
            loss_sum += losses[c];
            add_into(grad, partial[c]);
        }
    }
    return static_cast<T>(loss_sum / static_cast<double>(n));
}

template <typename T>
void sgd_step(LeNetParams<T>& params, const LeNetParams<T>& grad, double lr, double momentum,
              LeNetParams<T>* velocity) {
    auto p = params.tensors();
    auto g = grad.tensors();
    const T step = static_cast<T>(lr);
    if (momentum == 0.0 || velocity == nullptr) {
        for (std::size_t t = 0; t < p.size(); ++t) {
            auto& pd = p[t]->data;
            const auto& gd = g[t]->data;
            for (std::size_t i = 0; i < pd.size(); ++i) pd[i] -= step * gd[i];
        }
    } else {
        auto v = velocity->tensors();
        const T mu = static_cast<T>(momentum);
        for (std::size_t t = 0; t < p.size(); ++t) {
            auto& pd = p[t]->data;
            auto& vd = v[t]->data;
            const auto& gd = g[t]->data;
            for (std::size_t i = 0; i < pd.size(); ++i) {
                vd[i] = mu * vd[i] - step * gd[i];
                pd[i] += vd[i];
            }
        }
    }
    ++params.version;
}

template <typename T>
std::vector<std::uint8_t> encode_checkpoint(const LeNetParams<T>& params) {
    detail::ByteWriter w;
    w.bytes(kCheckpointMagic);
    w.u8(static_cast<std::uint8_t>(sizeof(T)));
    const NetShape& s = params.shape;
    for (int v : {s.input_h, s.input_w, s.input_c, s.conv1_filters, s.conv1_kernel, s.conv2_filters, s.conv2_kernel,
                  s.fc1_units, s.classes})
        w.i32(v);
    w.u8(static_cast<std::uint8_t>(s.activation));
    for (const auto* t : params.tensors()) {
        w.u32(static_cast<std::uint32_t>(t->shape.size()));
        for (auto dim : t->shape) w.u32(static_cast<std::uint32_t>(dim));
        for (T x : t->data) {
            if constexpr (sizeof(T) == 4)
                w.f32(x);
            else
                w.f64(x);
        }
    }
    return std::move(w.buffer());
}

template <typename T>
void save_checkpoint(const LeNetParams<T>& params, const std::filesystem::path& path) {
    detail::write_file(path, encode_checkpoint(params));
}

int checkpoint_scalar_bytes(const std::filesystem::path& path) {
    const auto bytes = detail::read_file(path);
    if (bytes.size() < 7 ||
        std::string_view(reinterpret_cast<const char*>(bytes.data()), kCheckpointMagic.size()) != kCheckpointMagic)
        throw FormatError("bad magic: not a checkpoint");
    return bytes[6];
}

template <typename T>
LeNetParams<T> load_checkpoint(const std::filesystem::path& path) {
    const auto bytes = detail::read_file(path);
    detail::ByteReader r(bytes, "checkpoint");
    if (bytes.size() < kCheckpointMagic.size() ||
        std::string_view(reinterpret_cast<const char*>(bytes.data()), kCheckpointMagic.size()) != kCheckpointMagic)
        throw FormatError("bad magic: not a checkpoint");
    r.bytes(kCheckpointMagic.size());
    if (r.u8() != sizeof(T)) throw FormatError("checkpoint precision does not match the requested scalar type");
    NetShape s;
    s.input_h = r.i32();
    s.input_w = r.i32();
    s.input_c = r.i32();
    s.conv1_filters = r.i32();
    s.conv1_kernel = r.i32();
    s.conv2_filters = r.i32();
    s.conv2_kernel = r.i32();
    s.fc1_units = r.i32();
    s.classes = r.i32();
    const std::uint8_t act = r.u8();
    if (act > 1) throw FormatError("unknown activation code in checkpoint");
    s.activation = static_cast<Activation>(act);
    LeNetParams<T> p = LeNetParams<T>::zeros(s);
    for (auto* t : p.tensors()) {
        const std::uint32_t rank = r.u32();
        if (rank != t->shape.size()) throw FormatError("checkpoint tensor rank mismatch");
        for (auto dim : t->shape)
            if (r.u32() != dim) throw FormatError("checkpoint tensor shape mismatch");
        for (T& x : t->data) {
            if constexpr (sizeof(T) == 4)
                x = r.f32();
            else
                x = r.f64();
        }
    }
    if (r.remaining() != 0) throw LengthError("trailing bytes after checkpoint payload");
    return p;
}

#define VARENN_INSTANTIATE(T)                                                                                 \
    template struct Tensor<T>;                                                                                \
    template struct LeNetParams<T>;                                                                           \
    template Tensor<T> forward(const LeNetParams<T>&, std::span<const T>, std::size_t, ForwardCache<T>*,      \
                               ShapeTrace*);                                                                  \
    template LossResult<T> loss_softmax_ce(const Tensor<T>&, std::span<const int>);                           \
    template std::vector<T> softmax_rows(const Tensor<T>&);                                                   \
    template LeNetParams<T> backward(const LeNetParams<T>&, const ForwardCache<T>&, const Tensor<T>&);        \
    template T batch_gradient(const LeNetParams<T>&, std::span<const T>, std::span<const int>, int,           \
                              LeNetParams<T>&);                                                               \
    template void sgd_step(LeNetParams<T>&, const LeNetParams<T>&, double, double, LeNetParams<T>*);          \
    template std::vector<std::uint8_t> encode_checkpoint(const LeNetParams<T>&);                              \
    template void save_checkpoint(const LeNetParams<T>&, const std::filesystem::path&);                       \
    template LeNetParams<T> load_checkpoint(const std::filesystem::path&);

VARENN_INSTANTIATE(float)
VARENN_INSTANTIATE(double)

#undef VARENN_INSTANTIATE

}  // namespace varenn
