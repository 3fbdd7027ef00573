#include "mwalign/encoder.hpp"

#include <cmath>
#include <fstream>
#include <stdexcept>

#include <json.hpp>

#include "mwalign/rng.hpp"

namespace mwalign {

using nlohmann::json;

std::string to_string(EncoderArch arch) { return arch == EncoderArch::affine ? "affine" : "mlp1"; }

EncoderArch encoder_arch_from_string(const std::string& name) {
    if (name == "affine") return EncoderArch::affine;
    if (name == "mlp1") return EncoderArch::mlp1;
    throw std::invalid_argument("unknown encoder arch '" + name + "'");
}

std::vector<std::span<double>> EncoderParams::blocks() {
    std::vector<std::span<double>> out{w1.flat(), std::span<double>(b1)};
    if (arch == EncoderArch::mlp1) {
        out.push_back(w2.flat());
        out.push_back(std::span<double>(b2));
    }
    return out;
}

std::vector<std::span<const double>> EncoderParams::blocks() const {
    std::vector<std::span<const double>> out{w1.flat(), std::span<const double>(b1)};
    if (arch == EncoderArch::mlp1) {
        out.push_back(w2.flat());
        out.push_back(std::span<const double>(b2));
    }
    return out;
}

std::size_t EncoderParams::parameter_count() const {
    std::size_t n = 0;
    for (auto block : blocks()) n += block.size();
    return n;
}

bool EncoderParams::all_finite() const {
    for (auto block : blocks())
        for (double v : block)
            if (!std::isfinite(v)) return false;
    return true;
}

EncoderParams EncoderParams::zeros_like() const {
    EncoderParams z = *this;
    for (auto block : z.blocks()) std::fill(block.begin(), block.end(), 0.0);
    return z;
}

EncoderParams init_identity(std::size_t dim, EncoderArch arch, std::size_t hidden, std::uint64_t seed) {
    if (dim == 0) throw std::invalid_argument("encoder dimension must be positive");
    EncoderParams p;
    p.arch = arch;
    p.d_in = dim;
    p.d_out = dim;
    if (arch == EncoderArch::affine) {
        p.w1 = Matrix::identity(dim);
        p.b1.assign(dim, 0.0);
        return p;
    }
    p.hidden = hidden == 0 ? dim : hidden;
    p.w1 = Matrix(p.hidden, dim);
    Rng rng(seed);
    const double scale = 1.0 / std::sqrt(static_cast<double>(dim));
    for (auto& w : p.w1.flat()) w = scale * rng.normal();
    p.b1.assign(p.hidden, 0.0);
    p.w2 = Matrix(dim, p.hidden);
    p.b2.assign(dim, 0.0);
    return p;
}

Matrix forward(const EncoderParams& params, const Matrix& x) {
    if (x.cols() != params.d_in)
        throw std::invalid_argument("forward: input dimension " + std::to_string(x.cols()) + " != " +
                                    std::to_string(params.d_in));
    Matrix z(x.rows(), params.d_out);
    if (params.arch == EncoderArch::affine) {
        for (std::size_t n = 0; n < x.rows(); ++n) {
            auto xn = x.row(n);
            for (std::size_t o = 0; o < params.d_out; ++o) z(n, o) = dot(params.w1.row(o), xn) + params.b1[o];
        }
        return z;
    }
    std::vector<double> act(params.hidden);
    for (std::size_t n = 0; n < x.rows(); ++n) {
        auto xn = x.row(n);
        for (std::size_t h = 0; h < params.hidden; ++h) act[h] = std::tanh(dot(params.w1.row(h), xn) + params.b1[h]);
        for (std::size_t o = 0; o < params.d_out; ++o) z(n, o) = xn[o] + dot(params.w2.row(o), act) + params.b2[o];
    }
    return z;
}

EncoderGradients backward_through(const EncoderParams& params, const Matrix& x, const Matrix& grad_z,
                                  bool want_input_grad) {
    if (x.cols() != params.d_in || grad_z.cols() != params.d_out || grad_z.rows() != x.rows())
        throw std::invalid_argument("backward_through: shape mismatch");

    EncoderGradients out{params.zeros_like(), {}};
    auto& g = out.params;
    if (want_input_grad) out.inputs = Matrix(x.rows(), params.d_in);

    if (params.arch == EncoderArch::affine) {
        for (std::size_t n = 0; n < x.rows(); ++n) {
            auto xn = x.row(n);
            auto gn = grad_z.row(n);
            for (std::size_t o = 0; o < params.d_out; ++o) {
                const double go = gn[o];
                auto row = g.w1.row(o);
                for (std::size_t i = 0; i < params.d_in; ++i) row[i] += go * xn[i];
                g.b1[o] += go;
                if (want_input_grad) {
                    auto w = params.w1.row(o);
                    auto gx = out.inputs.row(n);
                    for (std::size_t i = 0; i < params.d_in; ++i) gx[i] += w[i] * go;
                }
            }
        }
        return out;
    }

    std::vector<double> act(params.hidden), delta(params.hidden);
    for (std::size_t n = 0; n < x.rows(); ++n) {
        auto xn = x.row(n);
        auto gn = grad_z.row(n);
        for (std::size_t h = 0; h < params.hidden; ++h) act[h] = std::tanh(dot(params.w1.row(h), xn) + params.b1[h]);
        std::fill(delta.begin(), delta.end(), 0.0);
        for (std::size_t o = 0; o < params.d_out; ++o) {
            const double go = gn[o];
            auto w2row = params.w2.row(o);
            auto gw2 = g.w2.row(o);
            for (std::size_t h = 0; h < params.hidden; ++h) {
                gw2[h] += go * act[h];
                delta[h] += w2row[h] * go;
            }
            g.b2[o] += go;
        }
        for (std::size_t h = 0; h < params.hidden; ++h) {
            delta[h] *= 1.0 - act[h] * act[h];
            auto gw1 = g.w1.row(h);
            for (std::size_t i = 0; i < params.d_in; ++i) gw1[i] += delta[h] * xn[i];
            g.b1[h] += delta[h];
        }
        if (want_input_grad) {
            auto gx = out.inputs.row(n);
            for (std::size_t i = 0; i < params.d_in; ++i) {
                double s = gn[i];
                for (std::size_t h = 0; h < params.hidden; ++h) s += params.w1(h, i) * delta[h];
                gx[i] = s;
            }
        }
    }
    return out;
}

namespace {

json matrix_to_json(const Matrix& m) {
    json rows = json::array();
    for (std::size_t r = 0; r < m.rows(); ++r) {
        auto row = m.row(r);
        rows.push_back(std::vector<double>(row.begin(), row.end()));
    }
    return rows;
}

Matrix matrix_from_json(const json& j, std::size_t rows, std::size_t cols, const char* name) {
    if (!j.is_array() || j.size() != rows) throw std::runtime_error(std::string("checkpoint: bad shape for ") + name);
    Matrix m(rows, cols);
    for (std::size_t r = 0; r < rows; ++r) {
        auto v = j[r].get<std::vector<double>>();
        if (v.size() != cols) throw std::runtime_error(std::string("checkpoint: bad shape for ") + name);
        std::copy(v.begin(), v.end(), m.row(r).begin());
    }
    return m;
}

std::vector<double> vector_from_json(const json& j, std::size_t n, const char* name) {
    auto v = j.get<std::vector<double>>();
    if (v.size() != n) throw std::runtime_error(std::string("checkpoint: bad length for ") + name);
    return v;
}

}  // namespace

void save_checkpoint(const EncoderParams& params, const std::filesystem::path& path) {
    json doc = {{"arch", to_string(params.arch)},
                {"d_in", params.d_in},
                {"d_out", params.d_out},
                {"hidden", params.hidden},
                {"W1", matrix_to_json(params.w1)},
                {"b1", params.b1}};
    if (params.arch == EncoderArch::mlp1) {
        doc["W2"] = matrix_to_json(params.w2);
        doc["b2"] = params.b2;
    }
    std::ofstream out(path, std::ios::binary);
    if (!out) throw std::ios_base::failure("cannot write checkpoint " + path.string());
    out << doc.dump(1) << '\n';
}

EncoderParams load_checkpoint(const std::filesystem::path& path) {
    std::ifstream in(path);
    if (!in) throw std::ios_base::failure("cannot open checkpoint " + path.string());
    const json doc = json::parse(in);
    EncoderParams p;
    p.arch = encoder_arch_from_string(doc.at("arch").get<std::string>());
    p.d_in = doc.at("d_in").get<std::size_t>();
    p.d_out = doc.at("d_out").get<std::size_t>();
    p.hidden = doc.value("hidden", std::size_t{0});
    if (p.arch == EncoderArch::affine) {
        p.w1 = matrix_from_json(doc.at("W1"), p.d_out, p.d_in, "W1");
        p.b1 = vector_from_json(doc.at("b1"), p.d_out, "b1");
    } else {
        if (p.d_in != p.d_out) throw std::runtime_error("checkpoint: residual mlp1 needs d_in == d_out");
        p.w1 = matrix_from_json(doc.at("W1"), p.hidden, p.d_in, "W1");
        p.b1 = vector_from_json(doc.at("b1"), p.hidden, "b1");
        p.w2 = matrix_from_json(doc.at("W2"), p.d_out, p.hidden, "W2");
        p.b2 = vector_from_json(doc.at("b2"), p.d_out, "b2");
    }
    if (!p.all_finite()) throw std::runtime_error("checkpoint contains non-finite parameters");
    return p;
}

}  // namespace mwalign
