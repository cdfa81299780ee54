#pragma once

#include <cstdint>
#include <string_view>

namespace varenn {

enum class Precision { real32, real64 };
enum class Activation { relu, tanh };

const char* to_string(Precision p);
Precision parse_precision(std::string_view s);
const char* to_string(Activation a);
Activation parse_activation(std::string_view s);

/// LeNet layer widths. The defaults are the DIGITS/Caffe LeNet widths on a 60×60×3 input:
/// conv 20@5×5 -> pool 2 -> conv 50@5×5 -> pool 2 -> fc 500 -> fc 5.
struct NetShape {
    int input_h = 60;
    int input_w = 60;
    int input_c = 3;
    int conv1_filters = 20;
    int conv1_kernel = 5;
    int conv2_filters = 50;
    int conv2_kernel = 5;
    int fc1_units = 500;
    int classes = 5;
    Activation activation = Activation::relu;

    friend bool operator==(const NetShape&, const NetShape&) = default;
};

struct TrainConfig {
    int epochs = 30;
    double base_lr = 0.01;
    double decay_gamma = 0.95;  ///< per-epoch multiplier of the learning rate
    int batch_size = 64;
    std::uint64_t seed = 1;
    Precision precision = Precision::real32;
    double momentum = 0.0;
    int workers = 1;            ///< gradient fan-out; results do not depend on it
    bool quantize_input = true; ///< feed round(255 v)/255 like an 8-bit image file
    NetShape net;

    /// Throws ConfigError when an invariant is violated.
    void validate() const;
};

}  // namespace varenn
