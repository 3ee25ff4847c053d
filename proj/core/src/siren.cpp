#include "partfield/siren.hpp"

#include <cmath>
#include <stdexcept>

namespace partfield {

using nlohmann::json;
using namespace ad;

namespace {

Dense make_dense(int in, int out, double wlim, double blim, Rng& rng) {
    Dense d;
    d.w = Tensor({in, out});
    d.b = Tensor({1, out});
    for (std::size_t i = 0; i < d.w.size(); ++i) d.w[i] = rng.uniform(-wlim, wlim);
    for (std::size_t i = 0; i < d.b.size(); ++i) d.b[i] = blim == 0.0 ? 0.0 : rng.uniform(-blim, blim);
    return d;
}

void check_spec(const SirenSpec& s) {
    if (s.layers < 2) throw std::invalid_argument("SirenSpec: need at least 2 layers");
    if (s.in_dim < 1 || s.hidden < 1 || s.out_dim < 1 || s.omega <= 0)
        throw std::invalid_argument("SirenSpec: invalid dimensions");
}

}  // namespace

ConditionedField make_field(const SirenSpec& net, const MappingSpec& map, int code_dim, Rng& rng) {
    check_spec(net);
    if (map.layers < 2) throw std::invalid_argument("MappingSpec: need at least 2 layers");
    if (code_dim < 1) throw std::invalid_argument("make_field: code_dim < 1");

    ConditionedField f;
    f.code_dim = code_dim;
    f.net.spec = net;
    for (int i = 0; i < net.layers; ++i) {
        const int in = i == 0 ? net.in_dim : net.hidden;
        const int out = i == net.layers - 1 ? net.out_dim : net.hidden;
        const double wlim = i == 0 ? 1.0 / in : std::sqrt(6.0 / in) / net.omega;
        // Biases share the weight limit; the omega factor multiplies them
        // too, so wider limits would blow up hidden pre-activations.
        f.net.layers.push_back(make_dense(in, out, wlim, wlim, rng));
    }

    f.map.spec = map;
    f.map.in_dim = code_dim;
    f.map.out_dim = 2 * f.net.sine_layers() * net.hidden;
    for (int i = 0; i < map.layers; ++i) {
        const int in = i == 0 ? code_dim : map.hidden;
        const int out = i == map.layers - 1 ? f.map.out_dim : map.hidden;
        // Zero biases keep the modulation near identity for small codes.
        f.map.layers.push_back(make_dense(in, out, 1.0 / std::sqrt(double(in)), 0.0, rng));
    }
    return f;
}

json field_spec_to_json(const ConditionedField& f) {
    json j;
    j["net"] = {{"in_dim", f.net.spec.in_dim}, {"hidden", f.net.spec.hidden},
                {"out_dim", f.net.spec.out_dim}, {"layers", f.net.spec.layers},
                {"omega", f.net.spec.omega}};
    j["map"] = {{"hidden", f.map.spec.hidden}, {"layers", f.map.spec.layers},
                {"slope", f.map.spec.slope}};
    j["code_dim"] = f.code_dim;
    return j;
}

ConditionedField field_from_spec_json(const json& j) {
    SirenSpec net;
    net.in_dim = j.at("net").at("in_dim");
    net.hidden = j.at("net").at("hidden");
    net.out_dim = j.at("net").at("out_dim");
    net.layers = j.at("net").at("layers");
    net.omega = j.at("net").at("omega");
    MappingSpec map;
    map.hidden = j.at("map").at("hidden");
    map.layers = j.at("map").at("layers");
    map.slope = j.at("map").at("slope");
    Rng dummy(0);
    ConditionedField f = make_field(net, map, j.at("code_dim"), dummy);
    for (auto& l : f.net.layers) {
        std::fill(l.w.vec().begin(), l.w.vec().end(), 0.0);
        std::fill(l.b.vec().begin(), l.b.vec().end(), 0.0);
    }
    for (auto& l : f.map.layers) {
        std::fill(l.w.vec().begin(), l.w.vec().end(), 0.0);
        std::fill(l.b.vec().begin(), l.b.vec().end(), 0.0);
    }
    return f;
}

void field_to_paramset(const ConditionedField& f, const std::string& prefix, ParamSet& out) {
    for (std::size_t i = 0; i < f.net.layers.size(); ++i) {
        out.add(prefix + "/net/" + std::to_string(i) + "/w", f.net.layers[i].w);
        out.add(prefix + "/net/" + std::to_string(i) + "/b", f.net.layers[i].b);
    }
    for (std::size_t i = 0; i < f.map.layers.size(); ++i) {
        out.add(prefix + "/map/" + std::to_string(i) + "/w", f.map.layers[i].w);
        out.add(prefix + "/map/" + std::to_string(i) + "/b", f.map.layers[i].b);
    }
}

void field_load_params(ConditionedField& f, const std::string& prefix, const ParamSet& in) {
    for (std::size_t i = 0; i < f.net.layers.size(); ++i) {
        f.net.layers[i].w = in.get(prefix + "/net/" + std::to_string(i) + "/w");
        f.net.layers[i].b = in.get(prefix + "/net/" + std::to_string(i) + "/b");
    }
    for (std::size_t i = 0; i < f.map.layers.size(); ++i) {
        f.map.layers[i].w = in.get(prefix + "/map/" + std::to_string(i) + "/w");
        f.map.layers[i].b = in.get(prefix + "/map/" + std::to_string(i) + "/b");
    }
}

// ---- inference ---------------------------------------------------------

namespace {

// y (1 x out) = x (1 x in) * W + b, fixed accumulation order.
void affine_vec(const std::vector<double>& x, const Dense& d, std::vector<double>& y) {
    const int in = d.w.rows(), out = d.w.cols();
    y.assign(out, 0.0);
    for (int j = 0; j < out; ++j) y[j] = d.b[j];
    for (int k = 0; k < in; ++k) {
        const double xv = x[k];
        const double* wr = d.w.data() + static_cast<std::size_t>(k) * out;
        for (int j = 0; j < out; ++j) y[j] += xv * wr[j];
    }
}

}  // namespace

FilmScales film_condition(const ConditionedField& f, std::span<const double> code) {
    if (static_cast<int>(code.size()) != f.code_dim)
        throw std::invalid_argument("film_condition: code dim mismatch");
    std::vector<double> h(code.begin(), code.end()), next;
    const auto& layers = f.map.layers;
    for (std::size_t i = 0; i < layers.size(); ++i) {
        affine_vec(h, layers[i], next);
        if (i + 1 < layers.size())
            for (double& v : next) v = v > 0 ? v : f.map.spec.slope * v;
        h.swap(next);
    }
    const int hid = f.net.spec.hidden, ns = f.net.sine_layers();
    FilmScales s;
    s.gamma.resize(ns);
    s.beta.resize(ns);
    for (int l = 0; l < ns; ++l) {
        s.gamma[l].assign(h.begin() + 2 * l * hid, h.begin() + (2 * l + 1) * hid);
        for (double& g : s.gamma[l]) g += 1.0;
        s.beta[l].assign(h.begin() + (2 * l + 1) * hid, h.begin() + (2 * l + 2) * hid);
    }
    return s;
}

void eval_field(const ConditionedField& f, const FilmScales& film, const double* pts, int n,
                double* out) {
    const SirenSpec& s = f.net.spec;
    const int ns = f.net.sine_layers();
    std::vector<double> h(s.hidden), z(s.hidden);
    for (int p = 0; p < n; ++p) {
        const double* x = pts + static_cast<std::size_t>(p) * s.in_dim;
        // first sine layer
        {
            const Dense& d = f.net.layers[0];
            for (int j = 0; j < s.hidden; ++j) z[j] = d.b[j];
            for (int k = 0; k < s.in_dim; ++k) {
                const double* wr = d.w.data() + static_cast<std::size_t>(k) * s.hidden;
                for (int j = 0; j < s.hidden; ++j) z[j] += x[k] * wr[j];
            }
            for (int j = 0; j < s.hidden; ++j)
                h[j] = std::sin(film.gamma[0][j] * (s.omega * z[j]) + film.beta[0][j]);
        }
        for (int l = 1; l < ns; ++l) {
            const Dense& d = f.net.layers[l];
            for (int j = 0; j < s.hidden; ++j) z[j] = d.b[j];
            for (int k = 0; k < s.hidden; ++k) {
                const double hv = h[k];
                const double* wr = d.w.data() + static_cast<std::size_t>(k) * s.hidden;
                for (int j = 0; j < s.hidden; ++j) z[j] += hv * wr[j];
            }
            for (int j = 0; j < s.hidden; ++j)
                h[j] = std::sin(film.gamma[l][j] * (s.omega * z[j]) + film.beta[l][j]);
        }
        const Dense& last = f.net.layers.back();
        double* o = out + static_cast<std::size_t>(p) * s.out_dim;
        for (int j = 0; j < s.out_dim; ++j) o[j] = last.b[j];
        for (int k = 0; k < s.hidden; ++k) {
            const double hv = h[k];
            const double* wr = last.w.data() + static_cast<std::size_t>(k) * s.out_dim;
            for (int j = 0; j < s.out_dim; ++j) o[j] += hv * wr[j];
        }
        for (int j = 0; j < s.out_dim; ++j)
            if (!std::isfinite(o[j])) throw std::runtime_error("eval_field: non-finite output");
    }
}

void eval_field_grad(const ConditionedField& f, const FilmScales& film, const double* pts, int n,
                     double* value, double* grad) {
    const SirenSpec& s = f.net.spec;
    if (s.out_dim != 1 || s.in_dim != 3)
        throw std::invalid_argument("eval_field_grad: scalar field over 3-d points required");
    const int ns = f.net.sine_layers();
    const int H = s.hidden;
    std::vector<double> h(H), z(H), jac(3 * H), jz(3 * H);
    for (int p = 0; p < n; ++p) {
        const double* x = pts + static_cast<std::size_t>(p) * 3;
        {
            const Dense& d = f.net.layers[0];
            for (int j = 0; j < H; ++j) z[j] = d.b[j];
            for (int k = 0; k < 3; ++k) {
                const double* wr = d.w.data() + static_cast<std::size_t>(k) * H;
                for (int j = 0; j < H; ++j) z[j] += x[k] * wr[j];
            }
            for (int j = 0; j < H; ++j) {
                const double arg = film.gamma[0][j] * (s.omega * z[j]) + film.beta[0][j];
                const double c = std::cos(arg) * film.gamma[0][j] * s.omega;
                h[j] = std::sin(arg);
                for (int k = 0; k < 3; ++k)
                    jac[k * H + j] = c * d.w.at(k, j);
            }
        }
        for (int l = 1; l < ns; ++l) {
            const Dense& d = f.net.layers[l];
            for (int j = 0; j < H; ++j) z[j] = d.b[j];
            std::fill(jz.begin(), jz.end(), 0.0);
            for (int k = 0; k < H; ++k) {
                const double hv = h[k];
                const double j0 = jac[0 * H + k], j1 = jac[1 * H + k], j2 = jac[2 * H + k];
                const double* wr = d.w.data() + static_cast<std::size_t>(k) * H;
                for (int j = 0; j < H; ++j) {
                    z[j] += hv * wr[j];
                    jz[0 * H + j] += j0 * wr[j];
                    jz[1 * H + j] += j1 * wr[j];
                    jz[2 * H + j] += j2 * wr[j];
                }
            }
            for (int j = 0; j < H; ++j) {
                const double arg = film.gamma[l][j] * (s.omega * z[j]) + film.beta[l][j];
                const double c = std::cos(arg) * film.gamma[l][j] * s.omega;
                h[j] = std::sin(arg);
                for (int k = 0; k < 3; ++k) jac[k * H + j] = c * jz[k * H + j];
            }
        }
        const Dense& last = f.net.layers.back();
        double v = last.b[0];
        double g0 = 0, g1 = 0, g2 = 0;
        for (int k = 0; k < H; ++k) {
            const double w = last.w[k];
            v += h[k] * w;
            g0 += jac[0 * H + k] * w;
            g1 += jac[1 * H + k] * w;
            g2 += jac[2 * H + k] * w;
        }
        value[p] = v;
        grad[p * 3 + 0] = g0;
        grad[p * 3 + 1] = g1;
        grad[p * 3 + 2] = g2;
        if (!std::isfinite(v) || !std::isfinite(g0) || !std::isfinite(g1) || !std::isfinite(g2))
            throw std::runtime_error("eval_field_grad: non-finite output");
    }
}

// ---- taped -------------------------------------------------------------

TapedField bind_field(Tape& tape, const ConditionedField& f, bool train) {
    TapedField t;
    t.arch = &f;
    for (const auto& l : f.net.layers) {
        t.w.push_back(tape.leaf(l.w, train));
        t.b.push_back(tape.leaf(l.b, train));
    }
    for (const auto& l : f.map.layers) {
        t.mw.push_back(tape.leaf(l.w, train));
        t.mb.push_back(tape.leaf(l.b, train));
    }
    return t;
}

TapedFilm film_condition(Tape& tape, const TapedField& f, Var code) {
    const ConditionedField& arch = *f.arch;
    if (code.value().cols() != arch.code_dim || code.value().rows() != 1)
        throw std::invalid_argument("film_condition: code must be (1, code_dim)");
    Var h = code;
    const int L = static_cast<int>(f.mw.size());
    for (int i = 0; i < L; ++i) {
        h = add(matmul(h, f.mw[i]), f.mb[i]);
        if (i + 1 < L) h = leaky_relu(h, arch.map.spec.slope);
    }
    const int hid = arch.net.spec.hidden, ns = arch.net.sine_layers();
    TapedFilm film;
    for (int l = 0; l < ns; ++l) {
        film.gamma.push_back(offset(slice_cols(h, 2 * l * hid, hid), 1.0));
        film.beta.push_back(slice_cols(h, (2 * l + 1) * hid, hid));
    }
    return film;
}

Var field_forward(Tape& tape, const TapedField& f, const TapedFilm& film, Var x) {
    const SirenSpec& s = f.arch->net.spec;
    if (x.value().cols() != s.in_dim)
        throw std::invalid_argument("field_forward: point dim mismatch");
    const int ns = f.arch->net.sine_layers();
    Var h = x;
    for (int l = 0; l < ns; ++l) {
        Var z = scale(add(matmul(h, f.w[l]), f.b[l]), s.omega);
        h = sin(add(mul(z, film.gamma[l]), film.beta[l]));
    }
    return add(matmul(h, f.w[ns]), f.b[ns]);
}

FieldValueGrad field_forward_with_grad(Tape& tape, const TapedField& f, const TapedFilm& film,
                                       Var x) {
    const SirenSpec& s = f.arch->net.spec;
    if (s.out_dim != 1 || s.in_dim != 3)
        throw std::invalid_argument("field_forward_with_grad: scalar field over 3-d points");
    const int ns = f.arch->net.sine_layers();

    Var h = x;
    std::vector<Var> jac;  // d h / d x_c, one (N, hidden) per coordinate
    for (int l = 0; l < ns; ++l) {
        Var z = scale(add(matmul(h, f.w[l]), f.b[l]), s.omega);
        Var arg = add(mul(z, film.gamma[l]), film.beta[l]);
        Var c = mul(cos(arg), scale(film.gamma[l], s.omega));  // broadcast (1,h)

        std::vector<Var> next(3);
        if (l == 0) {
            for (int k = 0; k < 3; ++k) next[k] = mul(c, row(f.w[0], k));
        } else {
            for (int k = 0; k < 3; ++k) next[k] = mul(matmul(jac[k], f.w[l]), c);
        }
        jac = std::move(next);
        h = sin(arg);
    }
    FieldValueGrad out;
    out.value = add(matmul(h, f.w[ns]), f.b[ns]);
    std::vector<Var> cols(3);
    for (int k = 0; k < 3; ++k) cols[k] = matmul(jac[k], f.w[ns]);
    out.grad = concat_cols(cols);
    return out;
}

}  // namespace partfield
