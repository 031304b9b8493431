#pragma once

#include <Eigen/Dense>
#include <cmath>
#include <cstdint>
#include <limits>
#include <map>
#include <string>
#include <vector>

#include "recfill/common.hpp"
#include "recfill/positions.hpp"
#include "recfill/vocab.hpp"

namespace recfill {

template <typename T>
using Mat = Eigen::Matrix<T, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
template <typename T>
using ColVec = Eigen::Matrix<T, Eigen::Dynamic, 1>;

struct ModelConfig {
    int vocab_size = 0;
    int d_model = 64;
    int n_layers = 2;
    int n_heads = 4;
    int ffn_mult = 4;
    int max_len = int(kDefaultMaxLen);
    double dropout = 0.0;
    std::uint64_t seed = 1;

    void validate() const {
        if (vocab_size <= 0) throw ConfigError("vocab_size must be positive");
        if (d_model <= 0 || n_layers <= 0 || n_heads <= 0 || ffn_mult <= 0)
            throw ConfigError("model dimensions must be positive");
        if (d_model % n_heads != 0) throw ConfigError("d_model not divisible by n_heads");
        if (max_len <= 0 || max_len > int(kDefaultMaxLen))
            throw ConfigError("max_len must be in (0, 1024]");
        if (dropout < 0.0 || dropout >= 1.0) throw ConfigError("dropout must be in [0, 1)");
    }
};

template <typename T>
struct Tensor {
    std::string name;
    int rank = 2;  // 1: stored as a 1×n row; 2: rows×cols
    Mat<T> value;
    bool trainable = true;
};

// The four adapted projection roles, named like the transformer layers.
inline const std::vector<std::string>& lora_roles() {
    static const std::vector<std::string> kRoles = {"query_key_value", "dense", "dense_h_to_4h",
                                                    "dense_4h_to_h"};
    return kRoles;
}

namespace detail {

template <typename T>
T gelu(T x) {
    return T(0.5) * x * (T(1) + std::erf(x / std::sqrt(T(2))));
}

template <typename T>
T gelu_grad(T x) {
    T phi = std::exp(-x * x / T(2)) / std::sqrt(T(2) * T(M_PI));
    return T(0.5) * (T(1) + std::erf(x / std::sqrt(T(2)))) + x * phi;
}

}  // namespace detail

// Weights are stored input-major: Y = X · W with W [d_in × d_out]. LoRA keeps
// the conventional orientation (A [r × d_in], B [d_out × r]), so the adapted
// product is Y += scale · (X · Aᵀ) · Bᵀ and merging adds scale · Aᵀ · Bᵀ.
template <typename T>
class Net {
  public:
    explicit Net(const ModelConfig& config) : cfg_(config) {
        cfg_.validate();
        build_registry();
        Rng rng(derive_seed(cfg_.seed, "model-init", 0));
        for (auto& t : params_) init_tensor(t, rng);
    }

    const ModelConfig& config() const { return cfg_; }
    int lora_rank() const { return lora_rank_; }
    double lora_alpha() const { return lora_alpha_; }
    bool lora_attached() const { return lora_rank_ > 0; }
    bool lora_only() const { return lora_only_; }

    std::size_t tensor_count() const { return params_.size(); }
    const Tensor<T>& tensor_at(std::size_t i) const { return params_[i]; }
    Tensor<T>& tensor_at(std::size_t i) { return params_[i]; }
    bool has_tensor(const std::string& name) const { return index_.count(name) > 0; }
    std::size_t index_of(const std::string& name) const {
        auto it = index_.find(name);
        if (it == index_.end()) throw ConfigError("unknown tensor: " + name);
        return it->second;
    }
    Mat<T>& param(const std::string& name) { return params_[index_of(name)].value; }
    const Mat<T>& param(const std::string& name) const { return params_[index_of(name)].value; }

    std::size_t parameter_count() const {
        std::size_t n = 0;
        for (const auto& t : params_) n += std::size_t(t.value.size());
        return n;
    }

    void attach_lora(int rank, double alpha) {
        if (lora_rank_ > 0) throw ConfigError("lora already attached");
        if (rank < 1) throw ConfigError("lora rank must be >= 1");
        lora_rank_ = rank;
        lora_alpha_ = alpha;
        Rng rng(derive_seed(cfg_.seed, "lora-init", std::uint64_t(rank)));
        for (int l = 0; l < cfg_.n_layers; ++l) {
            for (const auto& role : lora_roles()) {
                const Mat<T>& base = param(role_param_name(l, role));
                long d_in = base.rows(), d_out = base.cols();
                Tensor<T> a;
                a.name = lora_name(l, role, 'A');
                a.value = Mat<T>(rank, d_in);
                for (long i = 0; i < a.value.size(); ++i)
                    a.value.data()[i] = T(rng.next_normal() * 0.02);
                Tensor<T> b;
                b.name = lora_name(l, role, 'B');
                b.value = Mat<T>::Zero(d_out, rank);
                push_tensor(std::move(a));
                push_tensor(std::move(b));
            }
        }
        apply_freeze();
    }

    void merge_lora() {
        if (lora_rank_ == 0) throw ConfigError("no lora attached");
        T scale = T(lora_alpha_ / double(lora_rank_));
        for (int l = 0; l < cfg_.n_layers; ++l) {
            for (const auto& role : lora_roles()) {
                Mat<T>& w = param(role_param_name(l, role));
                const Mat<T>& a = param(lora_name(l, role, 'A'));
                const Mat<T>& b = param(lora_name(l, role, 'B'));
                w.noalias() += scale * a.transpose() * b.transpose();
            }
        }
        std::vector<Tensor<T>> kept;
        for (auto& t : params_)
            if (t.name.rfind("lora.", 0) != 0) kept.push_back(std::move(t));
        params_ = std::move(kept);
        reindex();
        lora_rank_ = 0;
        lora_alpha_ = 0.0;
        apply_freeze();
    }

    // LoRA-only training freezes the four base projections per layer;
    // embeddings, position tables and layer norms stay trainable (they carry
    // the dual-position semantics and must adapt alongside the adapters).
    void set_lora_only(bool on) {
        lora_only_ = on;
        apply_freeze();
    }

    struct Cache {
        Mat<T> x0;
        struct Layer {
            Mat<T> x_in, h1, qkv, ctx, attn_drop_mask;
            std::vector<Mat<T>> probs;  // per head, n×n
            Mat<T> x_mid, h2, up, act, mlp_drop_mask;
            Mat<T> ln1_xhat, ln2_xhat;
            ColVec<T> ln1_inv_std, ln2_inv_std;
            Mat<T> lora_u[4];  // U = X · Aᵀ per role
        };
        std::vector<Layer> layers;
        Mat<T> x_final, hf, lnf_xhat;
        ColVec<T> lnf_inv_std;
        std::vector<std::uint8_t> vis;
        std::size_t n = 0;
    };

    Mat<T> forward(const PositionedExample& ex) const {
        Cache cache;
        return forward_cached(ex, cache, nullptr);
    }

    Mat<T> forward_cached(const PositionedExample& ex, Cache& cache, Rng* dropout_rng) const {
        const std::size_t n = ex.tokens.size();
        if (n == 0) throw DataError("empty example");
        if (long(n) > cfg_.max_len) throw DataError("sequence too long: " + ex.doc_id);
        const int d = cfg_.d_model;
        cache.n = n;
        cache.vis = build_visibility(ex);

        const Mat<T>& tok = param("embedding.token");
        const Mat<T>& inter = param("embedding.inter");
        const Mat<T>& intra = param("embedding.intra");
        Mat<T> x(long(n), d);
        for (std::size_t t = 0; t < n; ++t) {
            TokenId id = ex.tokens[t];
            if (id < 0 || id >= cfg_.vocab_size)
                throw DataError("token id out of range: " + std::to_string(id));
            if (ex.inter_ids[t] < 0 || ex.inter_ids[t] >= int(inter.rows()))
                throw DataError("inter id out of range");
            if (ex.intra_ids[t] < 0 || ex.intra_ids[t] >= int(intra.rows()))
                throw DataError("intra id out of range");
            x.row(long(t)) =
                tok.row(id) + inter.row(ex.inter_ids[t]) + intra.row(ex.intra_ids[t]);
        }
        cache.x0 = x;

        cache.layers.assign(std::size_t(cfg_.n_layers), {});
        for (int l = 0; l < cfg_.n_layers; ++l) {
            auto& c = cache.layers[std::size_t(l)];
            c.x_in = x;
            c.h1 = layer_norm(x, ln_prefix(l, "input_layernorm"), c.ln1_xhat, c.ln1_inv_std);
            c.qkv = project(c.h1, l, 0, c);
            attention(c, cache.vis, n);
            Mat<T> attn_out = project(c.ctx, l, 1, c);
            apply_dropout(attn_out, c.attn_drop_mask, dropout_rng);
            c.x_mid = c.x_in + attn_out;
            c.h2 = layer_norm(c.x_mid, ln_prefix(l, "post_attention_layernorm"), c.ln2_xhat,
                              c.ln2_inv_std);
            c.up = project(c.h2, l, 2, c);
            c.act = c.up.unaryExpr([](T v) { return detail::gelu(v); });
            Mat<T> mlp_out = project(c.act, l, 3, c);
            apply_dropout(mlp_out, c.mlp_drop_mask, dropout_rng);
            x = c.x_mid + mlp_out;
        }
        cache.x_final = x;
        cache.hf = layer_norm(x, "final_layernorm.", cache.lnf_xhat, cache.lnf_inv_std);
        return cache.hf * tok.transpose();  // tied output head
    }

    // Mean NLL over target positions of one example.
    static double infill_loss(const Mat<T>& logits, const PositionedExample& ex) {
        double total = 0.0;
        std::size_t count = 0;
        accumulate_loss(logits, ex, total, count);
        if (count == 0) throw DataError("empty spans batch");
        return total / double(count);
    }

    struct Grads {
        std::vector<Mat<T>> g;
    };

    Grads zero_grads() const {
        Grads grads;
        grads.g.reserve(params_.size());
        for (const auto& t : params_)
            grads.g.push_back(Mat<T>::Zero(t.value.rows(), t.value.cols()));
        return grads;
    }

    // Teacher-forced mean NLL over all target positions in the batch, plus
    // gradients. Examples are reduced strictly in index order so replays are
    // bit-identical regardless of available parallelism.
    double loss_and_grads(const std::vector<PositionedExample>& batch, Grads& grads,
                          Rng* dropout_rng = nullptr) const {
        std::vector<Cache> caches(batch.size());
        std::vector<Mat<T>> logits(batch.size());
        double total = 0.0;
        std::size_t count = 0;
        for (std::size_t i = 0; i < batch.size(); ++i) {
            logits[i] = forward_cached(batch[i], caches[i], dropout_rng);
            accumulate_loss(logits[i], batch[i], total, count);
        }
        if (count == 0) throw DataError("empty spans batch");
        for (std::size_t i = 0; i < batch.size(); ++i)
            backward_example(batch[i], caches[i], logits[i], T(1) / T(count), grads);
        for (std::size_t i = 0; i < params_.size(); ++i)
            if (!params_[i].trainable) grads.g[i].setZero();
        return total / double(count);
    }

    static std::string layer_prefix(int layer) { return "layers." + std::to_string(layer) + "."; }
    static std::string role_param_name(int layer, const std::string& role) {
        std::string group = (role == "query_key_value" || role == "dense") ? "attention." : "mlp.";
        return layer_prefix(layer) + group + role + ".weight";
    }
    static std::string lora_name(int layer, const std::string& role, char which) {
        return "lora." + std::to_string(layer) + "." + role + "." + std::string(1, which);
    }

  private:
    static std::string ln_prefix(int layer, const char* which) {
        return layer_prefix(layer) + which + ".";
    }

    void push_tensor(Tensor<T> t) {
        index_[t.name] = params_.size();
        params_.push_back(std::move(t));
    }

    void reindex() {
        index_.clear();
        for (std::size_t i = 0; i < params_.size(); ++i) index_[params_[i].name] = i;
    }

    void add_matrix(const std::string& name, long rows, long cols) {
        Tensor<T> t;
        t.name = name;
        t.rank = 2;
        t.value = Mat<T>(rows, cols);
        push_tensor(std::move(t));
    }

    void add_vector(const std::string& name, long n) {
        Tensor<T> t;
        t.name = name;
        t.rank = 1;
        t.value = Mat<T>(1, n);
        push_tensor(std::move(t));
    }

    void build_registry() {
        const long d = cfg_.d_model;
        add_matrix("embedding.token", cfg_.vocab_size, d);
        add_matrix("embedding.inter", long(cfg_.max_len) + 1, d);
        add_matrix("embedding.intra", kIntraTableSize, d);
        for (int l = 0; l < cfg_.n_layers; ++l) {
            add_vector(ln_prefix(l, "input_layernorm") + "weight", d);
            add_vector(ln_prefix(l, "input_layernorm") + "bias", d);
            add_matrix(role_param_name(l, "query_key_value"), d, 3 * d);
            add_matrix(role_param_name(l, "dense"), d, d);
            add_vector(ln_prefix(l, "post_attention_layernorm") + "weight", d);
            add_vector(ln_prefix(l, "post_attention_layernorm") + "bias", d);
            add_matrix(role_param_name(l, "dense_h_to_4h"), d, cfg_.ffn_mult * d);
            add_matrix(role_param_name(l, "dense_4h_to_h"), cfg_.ffn_mult * d, d);
        }
        add_vector("final_layernorm.weight", d);
        add_vector("final_layernorm.bias", d);
    }

    void init_tensor(Tensor<T>& t, Rng& rng) {
        if (t.rank == 1) {
            bool is_gain = t.name.size() >= 6 && t.name.rfind("weight") == t.name.size() - 6;
            t.value.setConstant(is_gain ? T(1) : T(0));
            return;
        }
        for (long i = 0; i < t.value.size(); ++i) t.value.data()[i] = T(rng.next_normal() * 0.02);
    }

    void apply_freeze() {
        for (auto& t : params_) {
            bool frozen = false;
            if (lora_only_ && t.name.rfind("lora.", 0) != 0) {
                for (const auto& role : lora_roles()) {
                    if (t.name.find("." + role + ".weight") != std::string::npos) {
                        frozen = true;
                        break;
                    }
                }
            }
            t.trainable = !frozen;
        }
    }

    Mat<T> layer_norm(const Mat<T>& x, const std::string& prefix, Mat<T>& xhat,
                      ColVec<T>& inv_std) const {
        const Mat<T>& g = param(prefix + "weight");
        const Mat<T>& b = param(prefix + "bias");
        const long n = x.rows(), d = x.cols();
        xhat.resize(n, d);
        inv_std.resize(n);
        Mat<T> y(n, d);
        for (long i = 0; i < n; ++i) {
            T mean = x.row(i).mean();
            T var = (x.row(i).array() - mean).square().sum() / T(d);
            T is = T(1) / std::sqrt(var + T(1e-5));
            inv_std(i) = is;
            xhat.row(i) = ((x.row(i).array() - mean) * is).matrix();
            y.row(i) = xhat.row(i).cwiseProduct(g.row(0)) + b.row(0);
        }
        return y;
    }

    // role: 0 = query_key_value, 1 = dense, 2 = dense_h_to_4h, 3 = dense_4h_to_h
    Mat<T> project(const Mat<T>& x, int layer, int role, typename Cache::Layer& c) const {
        const std::string& role_name = lora_roles()[std::size_t(role)];
        Mat<T> y = x * param(role_param_name(layer, role_name));
        if (lora_rank_ > 0) {
            const Mat<T>& a = param(lora_name(layer, role_name, 'A'));
            const Mat<T>& b = param(lora_name(layer, role_name, 'B'));
            c.lora_u[role] = x * a.transpose();
            y.noalias() += T(lora_alpha_ / double(lora_rank_)) * c.lora_u[role] * b.transpose();
        }
        return y;
    }

    void attention(typename Cache::Layer& c, const std::vector<std::uint8_t>& vis,
                   std::size_t n) const {
        const int d = cfg_.d_model;
        const int dh = d / cfg_.n_heads;
        const T scale = T(1) / std::sqrt(T(dh));
        c.ctx.resize(long(n), d);
        c.probs.assign(std::size_t(cfg_.n_heads), Mat<T>());
        for (int h = 0; h < cfg_.n_heads; ++h) {
            auto q = c.qkv.block(0, h * dh, long(n), dh);
            auto k = c.qkv.block(0, d + h * dh, long(n), dh);
            auto v = c.qkv.block(0, 2 * d + h * dh, long(n), dh);
            Mat<T> s = q * k.transpose() * scale;
            for (std::size_t i = 0; i < n; ++i)
                for (std::size_t j = 0; j < n; ++j)
                    if (!vis[i * n + j]) s(long(i), long(j)) = -std::numeric_limits<T>::infinity();
            const long rows = long(n);
            Mat<T> p(rows, rows);
            for (long i = 0; i < long(n); ++i) {
                T row_max = s.row(i).maxCoeff();
                p.row(i) = (s.row(i).array() - row_max).exp().matrix();
                // Vectorized exp clamps -inf to a denormal; masked probabilities
                // must be exact zeros or they leak into ctx and the backward pass.
                for (std::size_t j = 0; j < n; ++j)
                    if (!vis[std::size_t(i) * n + j]) p(i, long(j)) = T(0);
                p.row(i) /= p.row(i).sum();
            }
            c.probs[std::size_t(h)] = p;
            c.ctx.block(0, h * dh, long(n), dh).noalias() = p * v;
        }
    }

    void apply_dropout(Mat<T>& x, Mat<T>& mask, Rng* rng) const {
        if (cfg_.dropout <= 0.0 || rng == nullptr) {
            mask.resize(0, 0);
            return;
        }
        mask.resize(x.rows(), x.cols());
        T keep_inv = T(1.0 / (1.0 - cfg_.dropout));
        for (long i = 0; i < mask.size(); ++i)
            mask.data()[i] = rng->next_double() < cfg_.dropout ? T(0) : keep_inv;
        x = x.cwiseProduct(mask);
    }

    static void accumulate_loss(const Mat<T>& logits, const PositionedExample& ex, double& total,
                                std::size_t& count) {
        for (std::size_t t = 0; t < ex.targets.size(); ++t) {
            TokenId target = ex.targets[t];
            if (target < 0) continue;
            double row_max = double(logits.row(long(t)).maxCoeff());
            double lse = 0.0;
            for (long j = 0; j < logits.cols(); ++j)
                lse += std::exp(double(logits(long(t), j)) - row_max);
            total += std::log(lse) + row_max - double(logits(long(t), target));
            ++count;
        }
    }

    void backward_example(const PositionedExample& ex, Cache& cache, const Mat<T>& logits,
                          T scale, Grads& grads) const {
        const long n = long(cache.n);
        const int d = cfg_.d_model;
        const Mat<T>& tok = param("embedding.token");

        // d(mean NLL)/d(logits) = scale · (softmax(row) − onehot(target)).
        Mat<T> dlogits = Mat<T>::Zero(n, logits.cols());
        for (long t = 0; t < n; ++t) {
            TokenId target = ex.targets[std::size_t(t)];
            if (target < 0) continue;
            T row_max = logits.row(t).maxCoeff();
            Eigen::Array<T, 1, Eigen::Dynamic> p = (logits.row(t).array() - row_max).exp();
            p /= p.sum();
            dlogits.row(t) = p.matrix() * scale;
            dlogits(t, target) -= scale;
        }

        Mat<T> dhf = dlogits * tok;
        grads.g[index_of("embedding.token")].noalias() += dlogits.transpose() * cache.hf;

        Mat<T> dx = layer_norm_backward(dhf, cache.lnf_xhat, cache.lnf_inv_std,
                                        "final_layernorm.", grads);

        for (int l = cfg_.n_layers - 1; l >= 0; --l) {
            auto& c = cache.layers[std::size_t(l)];
            Mat<T> d_mlp = dx;
            if (c.mlp_drop_mask.size() > 0) d_mlp = d_mlp.cwiseProduct(c.mlp_drop_mask);
            Mat<T> d_act = project_backward(d_mlp, c.act, l, 3, grads, c);
            Mat<T> d_up =
                d_act.binaryExpr(c.up, [](T g, T u) { return g * detail::gelu_grad(u); });
            Mat<T> d_h2 = project_backward(d_up, c.h2, l, 2, grads, c);
            Mat<T> d_xmid = dx + layer_norm_backward(d_h2, c.ln2_xhat, c.ln2_inv_std,
                                                     ln_prefix(l, "post_attention_layernorm"),
                                                     grads);
            Mat<T> d_attn = d_xmid;
            if (c.attn_drop_mask.size() > 0) d_attn = d_attn.cwiseProduct(c.attn_drop_mask);
            Mat<T> d_ctx = project_backward(d_attn, c.ctx, l, 1, grads, c);
            Mat<T> d_qkv = Mat<T>::Zero(n, 3 * d);
            const int dh = d / cfg_.n_heads;
            const T att_scale = T(1) / std::sqrt(T(dh));
            for (int h = 0; h < cfg_.n_heads; ++h) {
                auto q = c.qkv.block(0, h * dh, n, dh);
                auto k = c.qkv.block(0, d + h * dh, n, dh);
                auto v = c.qkv.block(0, 2 * d + h * dh, n, dh);
                const Mat<T>& p = c.probs[std::size_t(h)];
                Mat<T> d_ctx_h = d_ctx.block(0, h * dh, n, dh);
                d_qkv.block(0, 2 * d + h * dh, n, dh).noalias() = p.transpose() * d_ctx_h;
                Mat<T> dp = d_ctx_h * v.transpose();
                Mat<T> ds(n, n);
                // Masked entries carry p = 0 exactly, so they stay zero here.
                for (long i = 0; i < n; ++i) {
                    T dot = dp.row(i).cwiseProduct(p.row(i)).sum();
                    ds.row(i) = p.row(i).cwiseProduct((dp.row(i).array() - dot).matrix());
                }
                d_qkv.block(0, h * dh, n, dh).noalias() = ds * k * att_scale;
                d_qkv.block(0, d + h * dh, n, dh).noalias() = ds.transpose() * q * att_scale;
            }
            Mat<T> d_h1 = project_backward(d_qkv, c.h1, l, 0, grads, c);
            dx = d_xmid + layer_norm_backward(d_h1, c.ln1_xhat, c.ln1_inv_std,
                                              ln_prefix(l, "input_layernorm"), grads);
        }

        Mat<T>& g_tok = grads.g[index_of("embedding.token")];
        Mat<T>& g_inter = grads.g[index_of("embedding.inter")];
        Mat<T>& g_intra = grads.g[index_of("embedding.intra")];
        for (long t = 0; t < n; ++t) {
            g_tok.row(ex.tokens[std::size_t(t)]) += dx.row(t);
            g_inter.row(ex.inter_ids[std::size_t(t)]) += dx.row(t);
            g_intra.row(ex.intra_ids[std::size_t(t)]) += dx.row(t);
        }
    }

    Mat<T> layer_norm_backward(const Mat<T>& dy, const Mat<T>& xhat, const ColVec<T>& inv_std,
                               const std::string& prefix, Grads& grads) const {
        const Mat<T>& g = param(prefix + "weight");
        const long n = dy.rows(), d = dy.cols();
        Mat<T>& dg = grads.g[index_of(prefix + "weight")];
        Mat<T>& db = grads.g[index_of(prefix + "bias")];
        Mat<T> dx(n, d);
        for (long i = 0; i < n; ++i) {
            dg.row(0) += dy.row(i).cwiseProduct(xhat.row(i));
            db.row(0) += dy.row(i);
            Eigen::Array<T, 1, Eigen::Dynamic> dxhat = dy.row(i).cwiseProduct(g.row(0)).array();
            T m1 = dxhat.mean();
            T m2 = (dxhat * xhat.row(i).array()).mean();
            dx.row(i) = ((dxhat - m1 - xhat.row(i).array() * m2) * inv_std(i)).matrix();
        }
        return dx;
    }

    Mat<T> project_backward(const Mat<T>& dy, const Mat<T>& x, int layer, int role, Grads& grads,
                            const typename Cache::Layer& c) const {
        const std::string& role_name = lora_roles()[std::size_t(role)];
        const Mat<T>& w = param(role_param_name(layer, role_name));
        grads.g[index_of(role_param_name(layer, role_name))].noalias() += x.transpose() * dy;
        Mat<T> dx = dy * w.transpose();
        if (lora_rank_ > 0) {
            const Mat<T>& a = param(lora_name(layer, role_name, 'A'));
            const Mat<T>& b = param(lora_name(layer, role_name, 'B'));
            const Mat<T>& u = c.lora_u[role];
            T s = T(lora_alpha_ / double(lora_rank_));
            grads.g[index_of(lora_name(layer, role_name, 'B'))].noalias() +=
                s * dy.transpose() * u;
            Mat<T> du = s * dy * b;
            grads.g[index_of(lora_name(layer, role_name, 'A'))].noalias() +=
                du.transpose() * x;
            dx.noalias() += du * a;
        }
        return dx;
    }

    ModelConfig cfg_;
    std::vector<Tensor<T>> params_;
    std::map<std::string, std::size_t> index_;
    int lora_rank_ = 0;
    double lora_alpha_ = 0.0;
    bool lora_only_ = false;
};

}  // namespace recfill
