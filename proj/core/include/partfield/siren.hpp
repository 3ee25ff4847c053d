#pragma once

#include <span>
#include <string>
#include <vector>

#include <json.hpp>

#include "partfield/checkpoint.hpp"
#include "partfield/random.hpp"
#include "partfield/tape.hpp"
#include "partfield/tensor.hpp"

namespace partfield {

/// One affine layer; w is (in, out) row-major, b is (1, out).
struct Dense {
    ad::Tensor w, b;
};

/// SIREN MLP: `layers` total affine layers, all but the last followed by a
/// sine. The base frequency scales every sine layer's pre-activation;
/// sine-layer weights are drawn U[-sqrt(6/in)/omega, +sqrt(6/in)/omega]
/// (first layer U[-1/in, 1/in]) so activations stay well-scaled in depth.
struct SirenSpec {
    int in_dim = 3;
    int hidden = 256;
    int out_dim = 1;
    int layers = 6;
    double omega = 30.0;
};

/// FiLM mapping network: LeakyReLU MLP from a conditioning code to one
/// (gamma_hat, beta) pair per sine layer. Modulation is
/// sin((1 + gamma_hat) * z + beta), so a zero mapping output is the
/// identity.
struct MappingSpec {
    int hidden = 128;
    int layers = 4;
    double slope = 0.2;
};

struct SirenMlp {
    SirenSpec spec;
    std::vector<Dense> layers;

    int sine_layers() const { return spec.layers - 1; }
};

struct FilmMapping {
    MappingSpec spec;
    int in_dim = 0;
    int out_dim = 0;
    std::vector<Dense> layers;
};

struct ConditionedField {
    SirenMlp net;
    FilmMapping map;
    int code_dim = 0;
};

ConditionedField make_field(const SirenSpec& net, const MappingSpec& map, int code_dim, Rng& rng);

nlohmann::json field_spec_to_json(const ConditionedField& f);
ConditionedField field_from_spec_json(const nlohmann::json& j);  // zero-initialized weights

void field_to_paramset(const ConditionedField& f, const std::string& prefix, ParamSet& out);
void field_load_params(ConditionedField& f, const std::string& prefix, const ParamSet& in);

// ---- inference path (no tape; pure, thread-safe on frozen weights) ----

/// Per-sine-layer modulation vectors for one conditioning code.
struct FilmScales {
    std::vector<std::vector<double>> gamma;  // 1 + gamma_hat
    std::vector<std::vector<double>> beta;
};

FilmScales film_condition(const ConditionedField& f, std::span<const double> code);

/// pts is n x in_dim row-major; out is n x out_dim. Throws on non-finite
/// output. Batched evaluation equals per-point evaluation bitwise.
void eval_field(const ConditionedField& f, const FilmScales& film, const double* pts, int n,
                double* out);

/// Scalar fields only: value plus exact spatial gradient (n x 3), both by
/// chain rule through the network.
void eval_field_grad(const ConditionedField& f, const FilmScales& film, const double* pts, int n,
                     double* value, double* grad);

// ---- training path (tape graph) ---------------------------------------

struct TapedField {
    const ConditionedField* arch = nullptr;
    std::vector<ad::Var> w, b;    // siren layers
    std::vector<ad::Var> mw, mb;  // mapping layers
};

/// Copies all weights onto the tape as leaves; train=false freezes them
/// (no gradient is computed into the weights, but graphs through them
/// still differentiate w.r.t. codes and other inputs).
TapedField bind_field(ad::Tape& tape, const ConditionedField& f, bool train);

struct TapedFilm {
    std::vector<ad::Var> gamma;  // (1, hidden) each, already offset by +1
    std::vector<ad::Var> beta;
};

TapedFilm film_condition(ad::Tape& tape, const TapedField& f, ad::Var code);

/// x is (N, in_dim); result (N, out_dim).
ad::Var field_forward(ad::Tape& tape, const TapedField& f, const TapedFilm& film, ad::Var x);

struct FieldValueGrad {
    ad::Var value;  // (N, 1)
    ad::Var grad;   // (N, 3); spatial gradient, itself differentiable
};

/// Scalar field with in_dim == 3. The spatial gradient is produced by
/// propagating input Jacobians through the same primitives as the value,
/// so losses built on it backpropagate into weights and code.
FieldValueGrad field_forward_with_grad(ad::Tape& tape, const TapedField& f, const TapedFilm& film,
                                       ad::Var x);

}  // namespace partfield
