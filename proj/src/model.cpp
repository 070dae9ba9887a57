#include "lossscope/model.hpp"

#include <algorithm>
#include <cmath>
#include <stdexcept>

#include "lossscope/parallel.hpp"
#include "lossscope/rng.hpp"

namespace lossscope {

namespace {

constexpr double kLayerNormEps = 1e-5;
constexpr double kInvSqrt2 = 0.70710678118654752440;
constexpr double kInvSqrt2Pi = 0.39894228040143267794;

double gelu(double x) { return 0.5 * x * (1.0 + std::erf(x * kInvSqrt2)); }

double gelu_grad(double x) {
    return 0.5 * (1.0 + std::erf(x * kInvSqrt2)) + x * kInvSqrt2Pi * std::exp(-0.5 * x * x);
}

// y = g * (x - mean)/sqrt(var + eps) + b, row of width n
void layernorm_row(const double* x, const double* g, const double* b, int n, double* y, double* xhat,
                   double* rstd_out) {
    double mean = 0.0;
    for (int d = 0; d < n; ++d) mean += x[d];
    mean /= n;
    double var = 0.0;
    for (int d = 0; d < n; ++d) {
        double c = x[d] - mean;
        var += c * c;
    }
    var /= n;
    double rstd = 1.0 / std::sqrt(var + kLayerNormEps);
    for (int d = 0; d < n; ++d) {
        double h = (x[d] - mean) * rstd;
        xhat[d] = h;
        y[d] = g[d] * h + b[d];
    }
    *rstd_out = rstd;
}

// given dy for one row, accumulates dg/db and writes dx += ...
void layernorm_backward_row(const double* dy, const double* xhat, double rstd, const double* g, int n,
                            double* dg, double* db, double* dx) {
    double m1 = 0.0, m2 = 0.0;
    for (int d = 0; d < n; ++d) {
        double dxh = dy[d] * g[d];
        m1 += dxh;
        m2 += dxh * xhat[d];
    }
    m1 /= n;
    m2 /= n;
    for (int d = 0; d < n; ++d) {
        dg[d] += dy[d] * xhat[d];
        db[d] += dy[d];
        double dxh = dy[d] * g[d];
        dx[d] += rstd * (dxh - m1 - xhat[d] * m2);
    }
}

// out[i,:] = bias + x[i,:] . w (w is in_dim x out_dim, row-major)
void linear_forward(const double* x, const double* w, const double* bias, int rows, int in_dim, int out_dim,
                    double* out) {
    for (int i = 0; i < rows; ++i) {
        double* orow = out + std::size_t(i) * out_dim;
        for (int d = 0; d < out_dim; ++d) orow[d] = bias[d];
        const double* xrow = x + std::size_t(i) * in_dim;
        for (int e = 0; e < in_dim; ++e) {
            double xe = xrow[e];
            const double* wrow = w + std::size_t(e) * out_dim;
            for (int d = 0; d < out_dim; ++d) orow[d] += xe * wrow[d];
        }
    }
}

// dx[i,e] += dy[i,:] . w[e,:];  dw[e,d] += sum_i x[i,e] dy[i,d];  db += column sums
void linear_backward(const double* x, const double* w, const double* dy, int rows, int in_dim, int out_dim,
                     double* dx, double* dw, double* db) {
    for (int i = 0; i < rows; ++i) {
        const double* dyrow = dy + std::size_t(i) * out_dim;
        const double* xrow = x + std::size_t(i) * in_dim;
        double* dxrow = dx + std::size_t(i) * in_dim;
        for (int d = 0; d < out_dim; ++d) db[d] += dyrow[d];
        for (int e = 0; e < in_dim; ++e) {
            const double* wrow = w + std::size_t(e) * out_dim;
            double acc = 0.0;
            double xe = xrow[e];
            double* dwrow = dw + std::size_t(e) * out_dim;
            for (int d = 0; d < out_dim; ++d) {
                acc += dyrow[d] * wrow[d];
                dwrow[d] += xe * dyrow[d];
            }
            dxrow[e] += acc;
        }
    }
}

}  // namespace

void ModelConfig::validate() const {
    if (num_layers < 1 || model_dim < 1 || num_heads < 1 || ffn_dim < 1 || max_seq_len < 2 || num_classes < 2) {
        throw std::invalid_argument("model config: all dimensions must be positive (and seq/classes at least 2)");
    }
    if (model_dim % num_heads != 0) {
        throw std::invalid_argument("model config: model_dim must be divisible by num_heads");
    }
    if (vocab_size < 3) {
        throw std::invalid_argument("model config: vocab must hold the mask and cls tokens plus data tokens");
    }
}

std::string head_kind_name(HeadKind kind) {
    return kind == HeadKind::masked_lm ? "masked_lm" : "classification";
}

HeadKind head_kind_from_name(std::string_view name) {
    if (name == "masked_lm") return HeadKind::masked_lm;
    if (name == "classification") return HeadKind::classification;
    throw std::invalid_argument("unknown head kind: '" + std::string(name) + "'");
}

Model::Model(ModelConfig cfg) : cfg_(cfg) {
    cfg_.validate();
    const std::size_t D = cfg_.model_dim;
    const std::size_t F = cfg_.ffn_dim;
    const std::size_t V = cfg_.vocab_size;
    const std::size_t S = cfg_.max_seq_len;
    const std::size_t C = cfg_.num_classes;

    std::vector<Segment> segs;
    std::size_t cursor = 0;
    auto push = [&](std::string name, std::optional<int> layer, std::size_t len, bool head) -> std::size_t {
        std::size_t off = cursor;
        segs.push_back({std::move(name), layer, off, len, head});
        cursor += len;
        return off;
    };

    tok_ = push("embed.tok", std::nullopt, V * D, false);
    pos_ = push("embed.pos", std::nullopt, S * D, false);
    layer_offsets_.resize(cfg_.num_layers);
    for (int l = 0; l < cfg_.num_layers; ++l) {
        std::string base = "layer" + std::to_string(l) + ".";
        LayerOffsets& o = layer_offsets_[l];
        o.ln1_g = push(base + "ln1.g", l, D, false);
        o.ln1_b = push(base + "ln1.b", l, D, false);
        o.wq = push(base + "attn.wq", l, D * D, false);
        o.bq = push(base + "attn.bq", l, D, false);
        o.wk = push(base + "attn.wk", l, D * D, false);
        o.bk = push(base + "attn.bk", l, D, false);
        o.wv = push(base + "attn.wv", l, D * D, false);
        o.bv = push(base + "attn.bv", l, D, false);
        o.wo = push(base + "attn.wo", l, D * D, false);
        o.bo = push(base + "attn.bo", l, D, false);
        o.ln2_g = push(base + "ln2.g", l, D, false);
        o.ln2_b = push(base + "ln2.b", l, D, false);
        o.w1 = push(base + "ffn.w1", l, D * F, false);
        o.b1 = push(base + "ffn.b1", l, F, false);
        o.w2 = push(base + "ffn.w2", l, F * D, false);
        o.b2 = push(base + "ffn.b2", l, D, false);
    }
    mlm_.ln_g = push("head.mlm.ln.g", std::nullopt, D, true);
    mlm_.ln_b = push("head.mlm.ln.b", std::nullopt, D, true);
    mlm_.w = push("head.mlm.w", std::nullopt, D * V, true);
    mlm_.b = push("head.mlm.b", std::nullopt, V, true);
    cls_.ln_g = push("head.cls.ln.g", std::nullopt, D, true);
    cls_.ln_b = push("head.cls.ln.b", std::nullopt, D, true);
    cls_.w = push("head.cls.w", std::nullopt, D * C, true);
    cls_.b = push("head.cls.b", std::nullopt, C, true);

    layout_ = ParamLayout::create(std::move(segs));
}

ParamVector Model::init_params(std::uint64_t seed) const {
    std::vector<double> values(layout_->total_len, 0.0);
    Rng rng(derive_seed(seed, 0x1717));
    const double dim_std = 1.0 / std::sqrt(double(cfg_.model_dim));
    const double ffn_std = 1.0 / std::sqrt(double(cfg_.ffn_dim));
    for (const Segment& s : layout_->segments) {
        double* out = values.data() + s.offset;
        bool is_ln_gain = s.name.ends_with("ln.g") || s.name.ends_with("ln1.g") || s.name.ends_with("ln2.g");
        bool is_bias = s.name.ends_with(".b") || s.name.ends_with("bq") || s.name.ends_with("bk") ||
                       s.name.ends_with("bv") || s.name.ends_with("bo") || s.name.ends_with("b1") ||
                       s.name.ends_with("b2");
        if (is_ln_gain) {
            std::fill(out, out + s.length, 1.0);
        } else if (is_bias) {
            // already zero
        } else if (s.name.starts_with("embed.")) {
            for (std::size_t k = 0; k < s.length; ++k) out[k] = rng.normal(0.0, 0.1);
        } else if (s.task_head) {
            for (std::size_t k = 0; k < s.length; ++k) out[k] = rng.normal(0.0, 0.02);
        } else if (s.name.ends_with("ffn.w2")) {
            for (std::size_t k = 0; k < s.length; ++k) out[k] = rng.normal(0.0, ffn_std);
        } else {
            for (std::size_t k = 0; k < s.length; ++k) out[k] = rng.normal(0.0, dim_std);
        }
    }
    return ParamVector(layout_, std::move(values), "init(" + std::to_string(seed) + ")");
}

void Model::reinit_cls_head(std::vector<double>& values, std::uint64_t seed) const {
    if (values.size() != layout_->total_len) throw std::invalid_argument("reinit_cls_head: wrong vector length");
    Rng rng(derive_seed(seed, 0xc1a55));
    const std::size_t D = cfg_.model_dim;
    const std::size_t C = cfg_.num_classes;
    std::fill(values.begin() + cls_.ln_g, values.begin() + cls_.ln_g + D, 1.0);
    std::fill(values.begin() + cls_.ln_b, values.begin() + cls_.ln_b + D, 0.0);
    for (std::size_t k = 0; k < D * C; ++k) values[cls_.w + k] = rng.normal(0.0, 0.02);
    std::fill(values.begin() + cls_.b, values.begin() + cls_.b + C, 0.0);
}

void Model::validate_batch(const Batch& batch, HeadKind head) const {
    if (batch.empty()) throw std::invalid_argument("empty batch");
    for (std::size_t i = 0; i < batch.size(); ++i) {
        const auto& toks = batch.token_ids[i];
        if (toks.empty() || int(toks.size()) > cfg_.max_seq_len) {
            throw std::invalid_argument("example " + std::to_string(i) + " has invalid length " +
                                        std::to_string(toks.size()));
        }
        for (int t : toks) {
            if (t < 0 || t >= cfg_.vocab_size) {
                throw std::invalid_argument("token id " + std::to_string(t) + " out of range in example " +
                                            std::to_string(i));
            }
        }
    }
    if (head == HeadKind::classification) {
        if (batch.labels.size() != batch.size()) throw std::invalid_argument("labels missing for classification batch");
        for (int y : batch.labels) {
            if (y < 0 || y >= cfg_.num_classes) throw std::invalid_argument("label out of range");
        }
    } else {
        if (batch.masks.size() != batch.size()) throw std::invalid_argument("mask slots missing for masked_lm batch");
        std::size_t total = 0;
        for (std::size_t i = 0; i < batch.size(); ++i) {
            for (const TargetSlot& m : batch.masks[i]) {
                if (m.position < 0 || m.position >= int(batch.token_ids[i].size())) {
                    throw std::invalid_argument("mask position out of range");
                }
                if (m.target < 0 || m.target >= cfg_.vocab_size) {
                    throw std::invalid_argument("mask target out of range");
                }
                ++total;
            }
        }
        if (total == 0) throw std::invalid_argument("masked_lm batch has no masked positions");
    }
}

std::vector<TargetSlot> Model::slots_for(const Batch& batch, std::size_t example, HeadKind head) const {
    if (head == HeadKind::classification) return {TargetSlot{0, batch.labels[example]}};
    return batch.masks[example];
}

void Model::forward_encoder(std::span<const double> p, std::span<const int> tokens, Workspace& ws) const {
    const int S = int(tokens.size());
    const int D = cfg_.model_dim;
    const int F = cfg_.ffn_dim;
    const int H = cfg_.num_heads;
    const int Dh = D / H;
    const double inv_sqrt_dh = 1.0 / std::sqrt(double(Dh));

    ws.seq_len = S;
    ws.layers.resize(cfg_.num_layers);
    ws.h_final.assign(std::size_t(S) * D, 0.0);

    // embeddings
    std::vector<double> x(std::size_t(S) * D);
    for (int i = 0; i < S; ++i) {
        const double* te = p.data() + tok_ + std::size_t(tokens[i]) * D;
        const double* pe = p.data() + pos_ + std::size_t(i) * D;
        double* row = x.data() + std::size_t(i) * D;
        for (int d = 0; d < D; ++d) row[d] = te[d] + pe[d];
    }

    for (int l = 0; l < cfg_.num_layers; ++l) {
        const LayerOffsets& o = layer_offsets_[l];
        Workspace::Layer& L = ws.layers[l];
        L.x = x;
        L.ln1_xhat.assign(std::size_t(S) * D, 0.0);
        L.ln1_rstd.assign(S, 0.0);
        L.a.assign(std::size_t(S) * D, 0.0);
        for (int i = 0; i < S; ++i) {
            layernorm_row(L.x.data() + std::size_t(i) * D, p.data() + o.ln1_g, p.data() + o.ln1_b, D,
                          L.a.data() + std::size_t(i) * D, L.ln1_xhat.data() + std::size_t(i) * D,
                          &L.ln1_rstd[i]);
        }

        L.q.assign(std::size_t(S) * D, 0.0);
        L.k.assign(std::size_t(S) * D, 0.0);
        L.v.assign(std::size_t(S) * D, 0.0);
        linear_forward(L.a.data(), p.data() + o.wq, p.data() + o.bq, S, D, D, L.q.data());
        linear_forward(L.a.data(), p.data() + o.wk, p.data() + o.bk, S, D, D, L.k.data());
        linear_forward(L.a.data(), p.data() + o.wv, p.data() + o.bv, S, D, D, L.v.data());

        L.probs.assign(std::size_t(H) * S * S, 0.0);
        L.ctx.assign(std::size_t(S) * D, 0.0);
        std::vector<double> scores(S);
        for (int h = 0; h < H; ++h) {
            const int base = h * Dh;
            for (int i = 0; i < S; ++i) {
                const double* qrow = L.q.data() + std::size_t(i) * D + base;
                for (int j = 0; j < S; ++j) {
                    const double* krow = L.k.data() + std::size_t(j) * D + base;
                    double s = 0.0;
                    for (int d = 0; d < Dh; ++d) s += qrow[d] * krow[d];
                    scores[j] = s * inv_sqrt_dh;
                }
                double mx = scores[0];
                for (int j = 1; j < S; ++j) mx = std::max(mx, scores[j]);
                double denom = 0.0;
                double* prow = L.probs.data() + (std::size_t(h) * S + i) * S;
                for (int j = 0; j < S; ++j) {
                    prow[j] = std::exp(scores[j] - mx);
                    denom += prow[j];
                }
                double inv = 1.0 / denom;
                for (int j = 0; j < S; ++j) prow[j] *= inv;
                double* crow = L.ctx.data() + std::size_t(i) * D + base;
                for (int j = 0; j < S; ++j) {
                    const double pij = prow[j];
                    const double* vrow = L.v.data() + std::size_t(j) * D + base;
                    for (int d = 0; d < Dh; ++d) crow[d] += pij * vrow[d];
                }
            }
        }

        L.x2.assign(std::size_t(S) * D, 0.0);
        linear_forward(L.ctx.data(), p.data() + o.wo, p.data() + o.bo, S, D, D, L.x2.data());
        for (std::size_t k = 0; k < L.x2.size(); ++k) L.x2[k] += L.x[k];

        L.ln2_xhat.assign(std::size_t(S) * D, 0.0);
        L.ln2_rstd.assign(S, 0.0);
        L.f.assign(std::size_t(S) * D, 0.0);
        for (int i = 0; i < S; ++i) {
            layernorm_row(L.x2.data() + std::size_t(i) * D, p.data() + o.ln2_g, p.data() + o.ln2_b, D,
                          L.f.data() + std::size_t(i) * D, L.ln2_xhat.data() + std::size_t(i) * D,
                          &L.ln2_rstd[i]);
        }

        L.u.assign(std::size_t(S) * F, 0.0);
        linear_forward(L.f.data(), p.data() + o.w1, p.data() + o.b1, S, D, F, L.u.data());
        L.g.assign(std::size_t(S) * F, 0.0);
        for (std::size_t k = 0; k < L.u.size(); ++k) L.g[k] = gelu(L.u[k]);

        // x <- x2 + g.w2 + b2
        linear_forward(L.g.data(), p.data() + o.w2, p.data() + o.b2, S, F, D, x.data());
        for (std::size_t k = 0; k < x.size(); ++k) x[k] += L.x2[k];
    }
    ws.h_final = x;
}

void Model::forward_head(std::span<const double> p, std::span<const TargetSlot> slots, HeadKind head,
                         Workspace& ws) const {
    const int D = cfg_.model_dim;
    const int K = head_width(head);
    const HeadOffsets& o = head_offsets(head);

    ws.units.resize(slots.size());
    for (std::size_t u = 0; u < slots.size(); ++u) {
        Workspace::Unit& unit = ws.units[u];
        unit.slot = slots[u];
        unit.zhat.assign(D, 0.0);
        unit.hbar.assign(D, 0.0);
        unit.logits.assign(K, 0.0);
        unit.probs.assign(K, 0.0);
        const double* z = ws.h_final.data() + std::size_t(unit.slot.position) * D;
        layernorm_row(z, p.data() + o.ln_g, p.data() + o.ln_b, D, unit.hbar.data(), unit.zhat.data(),
                      &unit.rstd);
        for (int k = 0; k < K; ++k) unit.logits[k] = p[o.b + k];
        for (int d = 0; d < D; ++d) {
            double hd = unit.hbar[d];
            const double* wrow = p.data() + o.w + std::size_t(d) * K;
            for (int k = 0; k < K; ++k) unit.logits[k] += hd * wrow[k];
        }
        double mx = unit.logits[0];
        int arg = 0;
        for (int k = 1; k < K; ++k) {
            if (unit.logits[k] > mx) {
                mx = unit.logits[k];
                arg = k;
            }
        }
        double denom = 0.0;
        for (int k = 0; k < K; ++k) denom += std::exp(unit.logits[k] - mx);
        double lse = mx + std::log(denom);
        unit.loss = lse - unit.logits[unit.slot.target];
        for (int k = 0; k < K; ++k) unit.probs[k] = std::exp(unit.logits[k] - lse);
        unit.correct = (arg == unit.slot.target);
    }
}

LossValue Model::forward_example(const ParamVector& params, std::span<const int> tokens,
                                 std::span<const TargetSlot> slots, HeadKind head, Workspace& ws) const {
    if (!same_layout(params.layout(), layout_)) throw std::invalid_argument("params layout does not match model");
    forward_encoder(params.values(), tokens, ws);
    forward_head(params.values(), slots, head, ws);
    LossValue out;
    for (const auto& unit : ws.units) {
        out.loss += unit.loss;
        out.correct += unit.correct ? 1 : 0;
        out.count += 1;
    }
    return out;
}

struct Model::Scratch {
    std::vector<double> dx, dx2, da, dq, dk, dv, dctx, df, du, dg, dh;
    std::vector<double> drow;       // attention backward row
    std::vector<double> dhbar, dz, dlogits;
};

void Model::backward_example(std::span<const double> p, std::span<const int> tokens, HeadKind head,
                             const Workspace& ws, Scratch& sc, std::span<double> grad) const {
    const int S = ws.seq_len;
    const int D = cfg_.model_dim;
    const int F = cfg_.ffn_dim;
    const int H = cfg_.num_heads;
    const int Dh = D / H;
    const int K = head_width(head);
    const double inv_sqrt_dh = 1.0 / std::sqrt(double(Dh));
    const HeadOffsets& oh = head_offsets(head);

    sc.dh.assign(std::size_t(S) * D, 0.0);
    sc.dhbar.assign(D, 0.0);
    sc.dz.assign(D, 0.0);
    sc.dlogits.assign(K, 0.0);

    // head: d(sum loss)/dlogits = probs - onehot per unit
    for (const auto& unit : ws.units) {
        for (int k = 0; k < K; ++k) sc.dlogits[k] = unit.probs[k];
        sc.dlogits[unit.slot.target] -= 1.0;

        for (int k = 0; k < K; ++k) grad[oh.b + k] += sc.dlogits[k];
        std::fill(sc.dhbar.begin(), sc.dhbar.end(), 0.0);
        for (int d = 0; d < D; ++d) {
            const double* wrow = p.data() + oh.w + std::size_t(d) * K;
            double* gw = grad.data() + oh.w + std::size_t(d) * K;
            double acc = 0.0;
            double hd = unit.hbar[d];
            for (int k = 0; k < K; ++k) {
                acc += wrow[k] * sc.dlogits[k];
                gw[k] += hd * sc.dlogits[k];
            }
            sc.dhbar[d] = acc;
        }
        std::fill(sc.dz.begin(), sc.dz.end(), 0.0);
        layernorm_backward_row(sc.dhbar.data(), unit.zhat.data(), unit.rstd, p.data() + oh.ln_g, D,
                               grad.data() + oh.ln_g, grad.data() + oh.ln_b, sc.dz.data());
        double* dh_row = sc.dh.data() + std::size_t(unit.slot.position) * D;
        for (int d = 0; d < D; ++d) dh_row[d] += sc.dz[d];
    }

    // encoder blocks in reverse; sc.dh holds d/d(block output)
    for (int l = cfg_.num_layers - 1; l >= 0; --l) {
        const LayerOffsets& o = layer_offsets_[l];
        const Workspace::Layer& L = ws.layers[l];

        // ffn: out = x2 + gelu(LN2(x2).w1 + b1).w2 + b2
        sc.dx2 = sc.dh;  // residual branch
        sc.dg.assign(std::size_t(S) * F, 0.0);
        linear_backward(L.g.data(), p.data() + o.w2, sc.dh.data(), S, F, D, sc.dg.data(), grad.data() + o.w2,
                        grad.data() + o.b2);
        sc.du.assign(std::size_t(S) * F, 0.0);
        for (std::size_t k = 0; k < sc.du.size(); ++k) sc.du[k] = sc.dg[k] * gelu_grad(L.u[k]);
        sc.df.assign(std::size_t(S) * D, 0.0);
        linear_backward(L.f.data(), p.data() + o.w1, sc.du.data(), S, D, F, sc.df.data(), grad.data() + o.w1,
                        grad.data() + o.b1);
        for (int i = 0; i < S; ++i) {
            layernorm_backward_row(sc.df.data() + std::size_t(i) * D, L.ln2_xhat.data() + std::size_t(i) * D,
                                   L.ln2_rstd[i], p.data() + o.ln2_g, D, grad.data() + o.ln2_g,
                                   grad.data() + o.ln2_b, sc.dx2.data() + std::size_t(i) * D);
        }

        // attention: x2 = x + (ctx.wo + bo)
        sc.dx = sc.dx2;  // residual branch
        sc.dctx.assign(std::size_t(S) * D, 0.0);
        linear_backward(L.ctx.data(), p.data() + o.wo, sc.dx2.data(), S, D, D, sc.dctx.data(),
                        grad.data() + o.wo, grad.data() + o.bo);

        sc.dq.assign(std::size_t(S) * D, 0.0);
        sc.dk.assign(std::size_t(S) * D, 0.0);
        sc.dv.assign(std::size_t(S) * D, 0.0);
        sc.drow.assign(S, 0.0);
        for (int h = 0; h < H; ++h) {
            const int base = h * Dh;
            for (int i = 0; i < S; ++i) {
                const double* prow = L.probs.data() + (std::size_t(h) * S + i) * S;
                const double* dcrow = sc.dctx.data() + std::size_t(i) * D + base;
                // dprobs and dv
                double inner = 0.0;
                for (int j = 0; j < S; ++j) {
                    const double* vrow = L.v.data() + std::size_t(j) * D + base;
                    double dp = 0.0;
                    for (int d = 0; d < Dh; ++d) dp += dcrow[d] * vrow[d];
                    sc.drow[j] = dp;
                    inner += prow[j] * dp;
                    double* dvrow = sc.dv.data() + std::size_t(j) * D + base;
                    const double pij = prow[j];
                    for (int d = 0; d < Dh; ++d) dvrow[d] += pij * dcrow[d];
                }
                // softmax backward, then scores -> q, k
                double* dqrow = sc.dq.data() + std::size_t(i) * D + base;
                const double* qrow = L.q.data() + std::size_t(i) * D + base;
                for (int j = 0; j < S; ++j) {
                    double ds = prow[j] * (sc.drow[j] - inner) * inv_sqrt_dh;
                    const double* krow = L.k.data() + std::size_t(j) * D + base;
                    double* dkrow = sc.dk.data() + std::size_t(j) * D + base;
                    for (int d = 0; d < Dh; ++d) {
                        dqrow[d] += ds * krow[d];
                        dkrow[d] += ds * qrow[d];
                    }
                }
            }
        }

        sc.da.assign(std::size_t(S) * D, 0.0);
        linear_backward(L.a.data(), p.data() + o.wq, sc.dq.data(), S, D, D, sc.da.data(), grad.data() + o.wq,
                        grad.data() + o.bq);
        linear_backward(L.a.data(), p.data() + o.wk, sc.dk.data(), S, D, D, sc.da.data(), grad.data() + o.wk,
                        grad.data() + o.bk);
        linear_backward(L.a.data(), p.data() + o.wv, sc.dv.data(), S, D, D, sc.da.data(), grad.data() + o.wv,
                        grad.data() + o.bv);
        for (int i = 0; i < S; ++i) {
            layernorm_backward_row(sc.da.data() + std::size_t(i) * D, L.ln1_xhat.data() + std::size_t(i) * D,
                                   L.ln1_rstd[i], p.data() + o.ln1_g, D, grad.data() + o.ln1_g,
                                   grad.data() + o.ln1_b, sc.dx.data() + std::size_t(i) * D);
        }
        sc.dh = sc.dx;
    }

    // embeddings
    for (int i = 0; i < S; ++i) {
        const double* row = sc.dh.data() + std::size_t(i) * D;
        double* gt = grad.data() + tok_ + std::size_t(tokens[i]) * D;
        double* gp = grad.data() + pos_ + std::size_t(i) * D;
        for (int d = 0; d < D; ++d) {
            gt[d] += row[d];
            gp[d] += row[d];
        }
    }
}

LossValue Model::forward_loss(const ParamVector& params, const Batch& batch, HeadKind head, int workers) const {
    if (!same_layout(params.layout(), layout_)) throw std::invalid_argument("params layout does not match model");
    validate_batch(batch, head);
    const std::size_t n = batch.size();
    std::vector<LossValue> parts(n);
    parallel_for(n, workers, [&](std::size_t i) {
        Workspace ws;
        auto slots = slots_for(batch, i, head);
        parts[i] = forward_example(params, batch.token_ids[i], slots, head, ws);
    });
    LossValue total;
    for (const LossValue& part : parts) {
        total.loss += part.loss;
        total.correct += part.correct;
        total.count += part.count;
    }
    total.loss /= double(total.count);
    return total;
}

LossValue Model::loss_and_grad(const ParamVector& params, const Batch& batch, HeadKind head,
                               std::vector<double>& grad_out, int workers) const {
    if (!same_layout(params.layout(), layout_)) throw std::invalid_argument("params layout does not match model");
    validate_batch(batch, head);
    const std::size_t n = batch.size();
    const std::size_t P = layout_->total_len;
    grad_out.assign(P, 0.0);

    // per-example gradients land in their own buffer, then fold in example
    // order so the result does not depend on the worker count
    constexpr std::size_t kWave = 16;
    std::vector<std::vector<double>> buffers(std::min(n, kWave));
    std::vector<LossValue> parts(n);
    LossValue total;
    for (std::size_t start = 0; start < n; start += kWave) {
        const std::size_t count = std::min(kWave, n - start);
        parallel_for(count, workers, [&](std::size_t w) {
            std::size_t i = start + w;
            buffers[w].assign(P, 0.0);
            Workspace ws;
            Scratch sc;
            auto slots = slots_for(batch, i, head);
            parts[i] = forward_example(params, batch.token_ids[i], slots, head, ws);
            backward_example(params.values(), batch.token_ids[i], head, ws, sc, buffers[w]);
        });
        for (std::size_t w = 0; w < count; ++w) {
            const std::vector<double>& buf = buffers[w];
            for (std::size_t k = 0; k < P; ++k) grad_out[k] += buf[k];
        }
    }
    for (const LossValue& part : parts) {
        total.loss += part.loss;
        total.correct += part.correct;
        total.count += part.count;
    }
    const double scale = 1.0 / double(total.count);
    for (double& g : grad_out) g *= scale;
    total.loss *= scale;
    return total;
}

Direction Model::grad(const ParamVector& params, const Batch& batch, HeadKind head, int workers) const {
    std::vector<double> g;
    loss_and_grad(params, batch, head, g, workers);
    Provenance prov;
    prov.kind = Provenance::Kind::external;
    prov.label = "grad(" + head_kind_name(head) + ", batch of " + std::to_string(batch.size()) + ")";
    return Direction(layout_, std::move(g), std::move(prov));
}

Metrics Model::evaluate(const ParamVector& params, const Batch& dataset, HeadKind head, int workers) const {
    if (dataset.empty()) throw std::invalid_argument("evaluate: empty dataset");
    LossValue v = forward_loss(params, dataset, head, workers);
    Metrics m;
    m.loss = v.loss;
    m.error_rate = 1.0 - double(v.correct) / double(v.count);
    return m;
}

}  // namespace lossscope
