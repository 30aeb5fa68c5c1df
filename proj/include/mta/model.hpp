#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <string>
#include <utility>
#include <vector>

#include "mta/autodiff.hpp"
#include "mta/path.hpp"
#include "mta/rng.hpp"
#include "mta/serialize.hpp"
#include "mta/vocab.hpp"

namespace mta {

enum class Variant { lstm, attention, timedecay, fusion };
enum class DecayMode { learned, fixed };

inline std::string variant_name(Variant v) {
    switch (v) {
    case Variant::lstm: return "lstm";
    case Variant::attention: return "dnamta";
    case Variant::timedecay: return "timedecay";
    case Variant::fusion: return "fusion";
    }
    return "?";
}

inline Variant variant_from_string(const std::string& s) {
    if (s == "lstm") return Variant::lstm;
    if (s == "dnamta" || s == "attention") return Variant::attention;
    if (s == "timedecay") return Variant::timedecay;
    if (s == "fusion") return Variant::fusion;
    throw ConfigError("unknown variant '" + s + "' (expected lstm, dnamta, timedecay, fusion)");
}

struct ModelConfig {
    Variant variant = Variant::attention;
    std::size_t vocab_size = 6;
    std::size_t embed_dim = 16;
    std::size_t hidden_dim = 64;
    std::size_t attention_dim = 64;
    std::size_t lstm_layers = 3;
    std::size_t control_dim = 0;
    std::vector<std::size_t> control_hidden_dims = {16, 16, 16};
    DecayMode decay_mode = DecayMode::learned;
    double fixed_lambda = 0.1;

    bool has_attention() const { return variant != Variant::lstm; }
    bool needs_decay() const {
        return variant == Variant::timedecay || variant == Variant::fusion;
    }
    bool uses_controls() const { return variant == Variant::fusion; }

    void validate() const {
        if (vocab_size < 1 || embed_dim < 1 || hidden_dim < 1 || attention_dim < 1 ||
            lstm_layers < 1)
            throw ConfigError("model dimensions must all be at least 1");
        if (uses_controls() && control_dim < 1)
            throw ConfigError("fusion variant requires control_dim >= 1");
        for (std::size_t d : control_hidden_dims)
            if (d < 1) throw ConfigError("control hidden dims must all be at least 1");
        if (needs_decay() && decay_mode == DecayMode::fixed && fixed_lambda <= 0.0)
            throw ConfigError("fixed lambda must be positive");
    }

    ordered_json to_json() const {
        ordered_json j;
        j["variant"] = variant_name(variant);
        j["vocab_size"] = vocab_size;
        j["embed_dim"] = embed_dim;
        j["hidden_dim"] = hidden_dim;
        j["attention_dim"] = attention_dim;
        j["lstm_layers"] = lstm_layers;
        j["control_dim"] = control_dim;
        j["control_hidden_dims"] = control_hidden_dims;
        j["decay_mode"] = decay_mode == DecayMode::learned ? "learned" : "fixed";
        j["fixed_lambda"] = fixed_lambda;
        return j;
    }

    static ModelConfig from_json(const ordered_json& j) {
        ModelConfig c;
        try {
            c.variant = variant_from_string(j.at("variant").get<std::string>());
            c.vocab_size = j.at("vocab_size").get<std::size_t>();
            c.embed_dim = j.at("embed_dim").get<std::size_t>();
            c.hidden_dim = j.at("hidden_dim").get<std::size_t>();
            c.attention_dim = j.at("attention_dim").get<std::size_t>();
            c.lstm_layers = j.at("lstm_layers").get<std::size_t>();
            c.control_dim = j.at("control_dim").get<std::size_t>();
            c.control_hidden_dims = j.at("control_hidden_dims").get<std::vector<std::size_t>>();
            const auto mode = j.at("decay_mode").get<std::string>();
            if (mode == "learned")
                c.decay_mode = DecayMode::learned;
            else if (mode == "fixed")
                c.decay_mode = DecayMode::fixed;
            else
                throw ConfigError("unknown decay_mode '" + mode + "'");
            c.fixed_lambda = j.at("fixed_lambda").get<double>();
        } catch (const ordered_json::exception& e) {
            throw ModelIoError(std::string("bad model config: ") + e.what());
        }
        c.validate();
        return c;
    }

    std::string hash() const { return hash_hex(fnv1a(to_json().dump())); }
};

struct LstmLayerParams {
    Tensor wx; // [4H x in]
    Tensor wh; // [4H x H]
    Tensor b;  // [4H], gate order: input, forget, candidate, output
};

struct DenseLayerParams {
    Tensor w; // [out x in]
    Tensor b; // [out]
};

// Raw decay parameter maps to lambda through softplus, so lambda stays
// positive under any gradient update.
inline double softplus_inverse(double y) { return std::log(std::expm1(y)); }

struct ModelParameters {
    Tensor embedding; // [v_e x v_tp]
    std::vector<LstmLayerParams> lstm;
    Tensor attn_w;  // [A x v_h]
    Tensor attn_b;  // [A]
    Tensor context; // [A]
    Tensor cls_w;   // [v_h]
    Tensor cls_b;   // [1]
    std::vector<DenseLayerParams> control_net;
    Tensor control_cls_w; // [last control width]
    Tensor decay_raw;     // [1], learned decay mode only

    // Train-split statistics applied as (x - mean) / std ahead of the control
    // net. Not trainable and not visited; identity until train() fills them.
    Tensor control_mean; // [control_dim]
    Tensor control_std;  // [control_dim]

    // Enumerates the tensors this config actually uses, in a fixed order.
    // Training, serialization, and graph leaves all share this order.
    template <typename Self, typename F>
    static void visit_impl(Self& self, const ModelConfig& cfg, F&& fn) {
        fn("embedding", self.embedding);
        for (std::size_t k = 0; k < self.lstm.size(); ++k) {
            const std::string p = "lstm" + std::to_string(k);
            fn(p + ".wx", self.lstm[k].wx);
            fn(p + ".wh", self.lstm[k].wh);
            fn(p + ".b", self.lstm[k].b);
        }
        if (cfg.has_attention()) {
            fn("attn.w", self.attn_w);
            fn("attn.b", self.attn_b);
            fn("attn.u", self.context);
        }
        fn("cls.w", self.cls_w);
        fn("cls.b", self.cls_b);
        if (cfg.uses_controls()) {
            for (std::size_t k = 0; k < self.control_net.size(); ++k) {
                const std::string p = "ctrl" + std::to_string(k);
                fn(p + ".w", self.control_net[k].w);
                fn(p + ".b", self.control_net[k].b);
            }
            fn("ctrl_cls.w", self.control_cls_w);
        }
        if (cfg.needs_decay() && cfg.decay_mode == DecayMode::learned)
            fn("decay.raw", self.decay_raw);
    }

    template <typename F> void visit(const ModelConfig& cfg, F&& fn) {
        visit_impl(*this, cfg, std::forward<F>(fn));
    }
    template <typename F> void visit(const ModelConfig& cfg, F&& fn) const {
        visit_impl(*this, cfg, std::forward<F>(fn));
    }

    std::size_t count(const ModelConfig& cfg) const {
        std::size_t n = 0;
        visit(cfg, [&](const std::string&, const Tensor& t) { n += t.numel(); });
        return n;
    }

    bool all_finite(const ModelConfig& cfg) const {
        bool ok = true;
        visit(cfg, [&](const std::string&, const Tensor& t) {
            for (double v : t.data())
                if (!std::isfinite(v)) ok = false;
        });
        return ok;
    }

    [[nodiscard]] static ModelParameters allocate(const ModelConfig& cfg) {
        cfg.validate();
        ModelParameters p;
        const std::size_t H = cfg.hidden_dim, A = cfg.attention_dim;
        p.embedding = Tensor({cfg.embed_dim, cfg.vocab_size});
        for (std::size_t k = 0; k < cfg.lstm_layers; ++k) {
            const std::size_t in = k == 0 ? cfg.embed_dim : H;
            p.lstm.push_back({Tensor({4 * H, in}), Tensor({4 * H, H}), Tensor({4 * H})});
        }
        if (cfg.has_attention()) {
            p.attn_w = Tensor({A, H});
            p.attn_b = Tensor({A});
            p.context = Tensor({A});
        }
        p.cls_w = Tensor({H});
        p.cls_b = Tensor({1});
        if (cfg.uses_controls()) {
            std::size_t in = cfg.control_dim;
            for (std::size_t width : cfg.control_hidden_dims) {
                p.control_net.push_back({Tensor({width, in}), Tensor({width})});
                in = width;
            }
            p.control_cls_w = Tensor({in});
            p.control_mean = Tensor({cfg.control_dim});
            p.control_std = Tensor({cfg.control_dim},
                                   std::vector<double>(cfg.control_dim, 1.0));
        }
        if (cfg.needs_decay() && cfg.decay_mode == DecayMode::learned)
            p.decay_raw = Tensor({1});
        return p;
    }

    [[nodiscard]] static ModelParameters init(const ModelConfig& cfg, std::uint64_t seed) {
        ModelParameters p = allocate(cfg);
        Rng rng(derive_seed(seed, 0x1217));
        auto uniform_fill = [&](Tensor& t, std::size_t fan_in) {
            const double bound = 1.0 / std::sqrt(double(fan_in));
            for (double& v : t.data()) v = rng.uniform(-bound, bound);
        };
        uniform_fill(p.embedding, cfg.vocab_size);
        for (auto& layer : p.lstm) {
            uniform_fill(layer.wx, layer.wx.dim(1));
            uniform_fill(layer.wh, layer.wh.dim(1));
            // biases zero except forget gate at +1
            const std::size_t H = cfg.hidden_dim;
            for (std::size_t i = H; i < 2 * H; ++i) layer.b[i] = 1.0;
        }
        if (cfg.has_attention()) {
            uniform_fill(p.attn_w, cfg.hidden_dim);
            uniform_fill(p.context, cfg.attention_dim);
        }
        uniform_fill(p.cls_w, cfg.hidden_dim);
        if (cfg.uses_controls()) {
            for (auto& layer : p.control_net) uniform_fill(layer.w, layer.w.dim(1));
            uniform_fill(p.control_cls_w, p.control_cls_w.numel());
        }
        if (cfg.needs_decay() && cfg.decay_mode == DecayMode::learned)
            p.decay_raw[0] = softplus_inverse(0.1);
        return p;
    }

    double lambda(const ModelConfig& cfg) const {
        if (!cfg.needs_decay()) return 0.0;
        if (cfg.decay_mode == DecayMode::fixed) return cfg.fixed_lambda;
        return ad::detail::softplus(decay_raw[0]);
    }
};

// Tape leaves for one forward/backward graph. `trainable` lists the leaves
// in ModelParameters::visit order for gradient extraction.
struct GraphLeaves {
    ad::Value embedding;
    struct LstmLeaves {
        ad::Value wx, wh, b;
    };
    std::vector<LstmLeaves> lstm;
    ad::Value attn_w, attn_b, context, cls_w, cls_b;
    std::vector<std::pair<ad::Value, ad::Value>> control_net;
    ad::Value control_cls_w;
    ad::Value lambda; // softplus(decay_raw) or fixed constant
    std::vector<ad::Value> trainable;
    std::vector<double> control_mean, control_std; // constants, not leaves
};

inline GraphLeaves make_leaves(ad::Tape& tape, const ModelParameters& p, const ModelConfig& cfg) {
    GraphLeaves g;
    auto track = [&](const Tensor& t) {
        ad::Value v = tape.leaf(t);
        g.trainable.push_back(v);
        return v;
    };
    g.embedding = track(p.embedding);
    for (const auto& layer : p.lstm)
        g.lstm.push_back({track(layer.wx), track(layer.wh), track(layer.b)});
    if (cfg.has_attention()) {
        g.attn_w = track(p.attn_w);
        g.attn_b = track(p.attn_b);
        g.context = track(p.context);
    }
    g.cls_w = track(p.cls_w);
    g.cls_b = track(p.cls_b);
    if (cfg.uses_controls()) {
        for (const auto& layer : p.control_net) {
            ad::Value w = track(layer.w); // two statements: track order must match visit order
            ad::Value b = track(layer.b);
            g.control_net.emplace_back(w, b);
        }
        g.control_cls_w = track(p.control_cls_w);
        g.control_mean = p.control_mean.data();
        g.control_std = p.control_std.data();
    }
    if (cfg.needs_decay()) {
        if (cfg.decay_mode == DecayMode::learned)
            g.lambda = tape.softplus(track(p.decay_raw));
        else
            g.lambda = tape.leaf_scalar(cfg.fixed_lambda);
    }
    return g;
}

struct PathGraph {
    ad::Value probability;          // scalar in (0,1)
    ad::Value weights;              // [T] attention weights (uniform for lstm variant)
    ad::Value s;                    // [v_h] path vector
    std::vector<ad::Value> hidden;  // top-layer h_t
};

inline PathGraph build_forward(ad::Tape& tape, const GraphLeaves& g, const ModelConfig& cfg,
                               const TouchpointPath& path) {
    const std::size_t T = path.length();
    if (T == 0) throw DataError("forward pass needs at least one event");
    if (cfg.needs_decay() && path.time_lags.size() != T)
        throw ConfigError("decay variant requires a time lag per event");
    const std::size_t H = cfg.hidden_dim;

    std::vector<ad::Value> x;
    x.reserve(T);
    for (std::uint32_t ev : path.events) {
        if (ev >= cfg.vocab_size)
            throw DataError("event index " + std::to_string(ev) + " outside vocabulary");
        x.push_back(tape.column(g.embedding, ev));
    }

    for (const auto& layer : g.lstm) {
        ad::Value h = tape.leaf(Tensor({H}));
        ad::Value c = tape.leaf(Tensor({H}));
        std::vector<ad::Value> out;
        out.reserve(T);
        for (std::size_t t = 0; t < T; ++t) {
            ad::Value pre =
                tape.add(tape.add(tape.matmul(layer.wx, x[t]), tape.matmul(layer.wh, h)), layer.b);
            ad::Value gi = tape.sigmoid(tape.slice(pre, 0, H));
            ad::Value gf = tape.sigmoid(tape.slice(pre, H, H));
            ad::Value gc = tape.tanh(tape.slice(pre, 2 * H, H));
            ad::Value go = tape.sigmoid(tape.slice(pre, 3 * H, H));
            c = tape.add(tape.mul(gf, c), tape.mul(gi, gc));
            h = tape.mul(go, tape.tanh(c));
            out.push_back(h);
        }
        x = std::move(out);
    }

    PathGraph out;
    out.hidden = std::move(x);

    if (cfg.has_attention()) {
        std::vector<ad::Value> logits;
        logits.reserve(T);
        for (const ad::Value& h : out.hidden) {
            ad::Value v = tape.tanh(tape.add(tape.matmul(g.attn_w, h), g.attn_b));
            logits.push_back(tape.dot(v, g.context));
        }
        ad::Value logit_vec = tape.stack(logits);
        ad::Value offsets = cfg.needs_decay()
                                ? tape.mul(tape.leaf(Tensor::row(path.time_lags)), g.lambda)
                                : tape.leaf(Tensor({T}));
        out.weights = tape.softmax_offsets(logit_vec, offsets);
        out.s = tape.weighted_sum(out.weights, out.hidden);
    } else {
        out.weights = tape.leaf(Tensor({T}, std::vector<double>(T, 1.0 / double(T))));
        out.s = out.hidden.back();
    }

    ad::Value logit = tape.add(tape.relu(tape.dot(g.cls_w, out.s)), g.cls_b);
    if (cfg.uses_controls()) {
        if (path.controls.size() != cfg.control_dim)
            throw DimensionError("control dimension mismatch: path has " +
                                 std::to_string(path.controls.size()) + ", model expects " +
                                 std::to_string(cfg.control_dim));
        std::vector<double> ctrl = path.controls;
        for (std::size_t i = 0; i < ctrl.size(); ++i)
            ctrl[i] = (ctrl[i] - g.control_mean[i]) / g.control_std[i];
        ad::Value v = tape.leaf(Tensor::row(ctrl));
        for (const auto& [w, b] : g.control_net) v = tape.relu(tape.add(tape.matmul(w, v), b));
        logit = tape.add(logit, tape.dot(g.control_cls_w, v));
    }
    out.probability = tape.sigmoid(logit);
    return out;
}

struct ForwardOutput {
    double probability = 0.0;
    std::vector<double> attention_weights;
    std::vector<double> path_vector;
    std::vector<std::vector<double>> hidden_states;
};

inline ForwardOutput forward(const ModelParameters& params, const ModelConfig& cfg,
                             const TouchpointPath& path) {
    ad::Tape tape;
    GraphLeaves leaves = make_leaves(tape, params, cfg);
    PathGraph graph = build_forward(tape, leaves, cfg, path);
    ForwardOutput out;
    out.probability = tape.val(graph.probability)[0];
    out.attention_weights = tape.val(graph.weights).data();
    out.path_vector = tape.val(graph.s).data();
    out.hidden_states.reserve(graph.hidden.size());
    for (const ad::Value& h : graph.hidden) out.hidden_states.push_back(tape.val(h).data());
    return out;
}

// No-exposure baseline: the classifier logit with the sequence branch at its
// ReLU floor. Fusion keeps the control contribution.
inline double empty_path_probability(const ModelParameters& params, const ModelConfig& cfg,
                                     const std::vector<double>& controls) {
    double logit = params.cls_b[0];
    if (cfg.uses_controls()) {
        if (controls.size() != cfg.control_dim)
            throw DimensionError("control dimension mismatch: got " +
                                 std::to_string(controls.size()) + ", model expects " +
                                 std::to_string(cfg.control_dim));
        std::vector<double> v = controls;
        for (std::size_t i = 0; i < v.size(); ++i)
            v[i] = (v[i] - params.control_mean[i]) / params.control_std[i];
        for (const auto& layer : params.control_net) {
            std::vector<double> next(layer.w.dim(0), 0.0);
            for (std::size_t r = 0; r < layer.w.dim(0); ++r) {
                double acc = layer.b[r];
                for (std::size_t c = 0; c < layer.w.dim(1); ++c)
                    acc += layer.w.at(r, c) * v[c];
                next[r] = acc > 0.0 ? acc : 0.0;
            }
            v = std::move(next);
        }
        for (std::size_t i = 0; i < v.size(); ++i) logit += params.control_cls_w[i] * v[i];
    }
    return ad::detail::sigmoid(logit);
}

struct TrainedModel {
    ModelConfig config;
    ModelParameters params;
    Vocabulary vocab;
    std::vector<std::string> control_schema;
};

inline void save_model(const std::string& file, const TrainedModel& m) {
    ordered_json j = model_envelope(variant_name(m.config.variant));
    j["config"] = m.config.to_json();
    j["config_hash"] = m.config.hash();
    j["vocab"] = m.vocab.to_json();
    j["control_schema"] = m.control_schema;
    ordered_json tensors = ordered_json::object();
    m.params.visit(m.config, [&](const std::string& name, const Tensor& t) {
        if (!t.all_finite()) throw ModelIoError("tensor '" + name + "' has non-finite values");
        tensors[name] = tensor_to_json(t);
    });
    j["tensors"] = std::move(tensors);
    if (m.config.uses_controls()) {
        j["normalization"] = {{"control_mean", m.params.control_mean.data()},
                              {"control_std", m.params.control_std.data()}};
    }
    write_json_file(file, j);
}

inline TrainedModel load_model_json(const ordered_json& j, const std::string& file) {
    check_envelope(j, file);
    const std::string variant = j.at("variant").get<std::string>();
    if (variant != "lstm" && variant != "dnamta" && variant != "timedecay" && variant != "fusion")
        throw ModelIoError("'" + file + "' holds a '" + variant +
                           "' model, not a sequence model");
    if (!j.contains("config")) throw ModelIoError("'" + file + "' is missing config");
    TrainedModel m;
    m.config = ModelConfig::from_json(j.at("config"));
    if (variant_name(m.config.variant) != variant)
        throw ModelIoError("variant field '" + variant + "' disagrees with config");
    const std::string stored_hash = j.value("config_hash", std::string());
    if (stored_hash != m.config.hash())
        throw ModelIoError("config hash mismatch: stored " + stored_hash + ", computed " +
                           m.config.hash());
    if (!j.contains("vocab")) throw ModelIoError("'" + file + "' is missing vocab");
    m.vocab = Vocabulary::from_json(j.at("vocab"));
    if (m.vocab.size() != m.config.vocab_size)
        throw ModelIoError("vocab size " + std::to_string(m.vocab.size()) +
                           " disagrees with config vocab_size " +
                           std::to_string(m.config.vocab_size));
    m.control_schema = j.value("control_schema", std::vector<std::string>());
    if (m.control_schema.size() != m.config.control_dim)
        throw ModelIoError("control schema length " + std::to_string(m.control_schema.size()) +
                           " disagrees with config control_dim " +
                           std::to_string(m.config.control_dim));

    if (!j.contains("tensors") || !j.at("tensors").is_object())
        throw ModelIoError("'" + file + "' is missing tensors");
    const ordered_json& tensors = j.at("tensors");
    m.params = ModelParameters::allocate(m.config);
    std::vector<std::string> expected;
    m.params.visit(m.config, [&](const std::string& name, Tensor& t) {
        expected.push_back(name);
        if (!tensors.contains(name)) throw ModelIoError("missing tensor '" + name + "'");
        Tensor loaded = tensor_from_json(tensors.at(name), name);
        if (!loaded.same_shape(t))
            throw ModelIoError("tensor '" + name + "' shape mismatch: expected " +
                               t.shape_string() + ", got " + loaded.shape_string());
        t = std::move(loaded);
    });
    for (const auto& item : tensors.items())
        if (std::find(expected.begin(), expected.end(), item.key()) == expected.end())
            throw ModelIoError("unexpected tensor '" + item.key() + "'");
    if (m.config.uses_controls()) {
        if (!j.contains("normalization"))
            throw ModelIoError("'" + file + "' is missing control normalization");
        try {
            const ordered_json& norm = j.at("normalization");
            auto mean = norm.at("control_mean").get<std::vector<double>>();
            auto sd = norm.at("control_std").get<std::vector<double>>();
            if (mean.size() != m.config.control_dim || sd.size() != m.config.control_dim)
                throw ModelIoError("control normalization length disagrees with control_dim");
            for (double s : sd)
                if (!(s > 0.0)) throw ModelIoError("control std entries must be positive");
            m.params.control_mean = Tensor({m.config.control_dim}, std::move(mean));
            m.params.control_std = Tensor({m.config.control_dim}, std::move(sd));
        } catch (const ordered_json::exception& e) {
            throw ModelIoError(std::string("bad control normalization: ") + e.what());
        }
    }
    return m;
}

inline TrainedModel load_model(const std::string& file) {
    return load_model_json(read_json_file(file), file);
}

} // namespace mta
