#pragma once

#include <cstdint>
#include <filesystem>
#include <span>
#include <string>
#include <vector>

#include "mwalign/matrix.hpp"

namespace mwalign {

enum class EncoderArch { affine, mlp1 };

std::string to_string(EncoderArch arch);
EncoderArch encoder_arch_from_string(const std::string& name);

// Trainable head over frozen base embeddings.
//
//   affine:  z = W1 x + b1
//   mlp1:    z = x + W2 tanh(W1 x + b1) + b2   (residual, d_out = d_in)
//
// A gradient with respect to the parameters has the same shape, so the same
// struct doubles as the gradient container.
struct EncoderParams {
    EncoderArch arch = EncoderArch::affine;
    std::size_t d_in = 0;
    std::size_t d_out = 0;
    std::size_t hidden = 0;  // mlp1 only
    Matrix w1;
    std::vector<double> b1;
    Matrix w2;
    std::vector<double> b2;

    bool operator==(const EncoderParams&) const = default;

    // Views of every parameter block in a fixed order.
    std::vector<std::span<double>> blocks();
    std::vector<std::span<const double>> blocks() const;
    std::size_t parameter_count() const;
    bool all_finite() const;
    // Same shape, all zeros.
    EncoderParams zeros_like() const;
};

// Parameters for which forward(x) == x exactly. For mlp1 the hidden layer is
// seeded with small random weights so gradients reach W2; the zeroed W2, b2
// keep the output at the identity.
EncoderParams init_identity(std::size_t dim, EncoderArch arch, std::size_t hidden = 0,
                            std::uint64_t seed = 0);

// Row-wise application to a batch of base embeddings.
Matrix forward(const EncoderParams& params, const Matrix& x);

struct EncoderGradients {
    EncoderParams params;  // gradient w.r.t. each block
    Matrix inputs;         // gradient w.r.t. x; empty unless requested
};

EncoderGradients backward_through(const EncoderParams& params, const Matrix& x, const Matrix& grad_z,
                                  bool want_input_grad = false);

void save_checkpoint(const EncoderParams& params, const std::filesystem::path& path);
EncoderParams load_checkpoint(const std::filesystem::path& path);

}  // namespace mwalign
