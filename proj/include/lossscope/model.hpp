#pragma once

#include <cstdint>
#include <span>
#include <string>
#include <vector>

#include "lossscope/param_space.hpp"

namespace lossscope {

struct ModelConfig {
    int num_layers = 6;
    int model_dim = 32;
    int num_heads = 2;
    int ffn_dim = 64;
    int vocab_size = 64;
    int max_seq_len = 16;
    int num_classes = 2;

    // the top two vocab ids are reserved
    int mask_token_id() const { return vocab_size - 1; }
    int cls_token_id() const { return vocab_size - 2; }
    int data_vocab() const { return vocab_size - 2; }

    void validate() const;
    bool operator==(const ModelConfig&) const = default;
};

enum class HeadKind { masked_lm, classification };

std::string head_kind_name(HeadKind kind);
HeadKind head_kind_from_name(std::string_view name);

// A prediction site: classification uses {position 0, label}; masked-token
// prediction uses one slot per masked position with the original token id.
struct TargetSlot {
    int position = 0;
    int target = 0;
    bool operator==(const TargetSlot&) const = default;
};

// Used both as a minibatch and as a whole labeled dataset.
struct Batch {
    std::vector<std::vector<int>> token_ids;
    std::vector<int> labels;                        // classification
    std::vector<std::vector<TargetSlot>> masks;     // masked_lm

    std::size_t size() const { return token_ids.size(); }
    bool empty() const { return token_ids.empty(); }
};

struct LossValue {
    double loss = 0.0;   // mean cross-entropy, nats
    long correct = 0;
    long count = 0;
};

struct Metrics {
    double loss = 0.0;
    double error_rate = 0.0;
};

class Model {
public:
    explicit Model(ModelConfig cfg);

    const ModelConfig& config() const { return cfg_; }
    const LayoutPtr& layout() const { return layout_; }

    ParamVector init_params(std::uint64_t seed) const;

    // deterministic fresh classification head, seeded independently of the body
    void reinit_cls_head(std::vector<double>& values, std::uint64_t seed) const;

    LossValue forward_loss(const ParamVector& params, const Batch& batch, HeadKind head, int workers = 1) const;

    Direction grad(const ParamVector& params, const Batch& batch, HeadKind head, int workers = 1) const;

    // mean loss and gradient in one pass; grad_out is resized and overwritten
    LossValue loss_and_grad(const ParamVector& params, const Batch& batch, HeadKind head,
                            std::vector<double>& grad_out, int workers = 1) const;

    Metrics evaluate(const ParamVector& params, const Batch& dataset, HeadKind head, int workers = 1) const;

    // Forward pass for a single example with all intermediates exposed.
    struct Workspace {
        int seq_len = 0;
        struct Layer {
            std::vector<double> x;          // block input, seq x dim
            std::vector<double> ln1_xhat, ln1_rstd;
            std::vector<double> a;          // post-LN1
            std::vector<double> q, k, v;
            std::vector<double> probs;      // heads x seq x seq attention rows
            std::vector<double> ctx;
            std::vector<double> x2;         // after attention residual
            std::vector<double> ln2_xhat, ln2_rstd;
            std::vector<double> f;          // post-LN2
            std::vector<double> u, g;       // ffn pre-activation / activated
        };
        std::vector<Layer> layers;
        std::vector<double> h_final;        // encoder output, seq x dim
        struct Unit {
            TargetSlot slot;
            std::vector<double> zhat, hbar, logits, probs;
            double rstd = 0.0;
            double loss = 0.0;
            bool correct = false;
        };
        std::vector<Unit> units;
    };

    // returns the summed (not averaged) loss over the example's target slots
    LossValue forward_example(const ParamVector& params, std::span<const int> tokens,
                              std::span<const TargetSlot> slots, HeadKind head, Workspace& ws) const;

private:
    struct LayerOffsets {
        std::size_t ln1_g, ln1_b, wq, bq, wk, bk, wv, bv, wo, bo, ln2_g, ln2_b, w1, b1, w2, b2;
    };
    struct HeadOffsets {
        std::size_t ln_g, ln_b, w, b;
    };
    struct Scratch;  // backward buffers, defined in the .cpp

    void validate_batch(const Batch& batch, HeadKind head) const;
    std::vector<TargetSlot> slots_for(const Batch& batch, std::size_t example, HeadKind head) const;
    const HeadOffsets& head_offsets(HeadKind head) const {
        return head == HeadKind::masked_lm ? mlm_ : cls_;
    }
    int head_width(HeadKind head) const {
        return head == HeadKind::masked_lm ? cfg_.vocab_size : cfg_.num_classes;
    }

    void forward_encoder(std::span<const double> p, std::span<const int> tokens, Workspace& ws) const;
    void forward_head(std::span<const double> p, std::span<const TargetSlot> slots, HeadKind head,
                      Workspace& ws) const;
    // accumulates d(sum loss)/d(params) for one example into grad
    void backward_example(std::span<const double> p, std::span<const int> tokens, HeadKind head,
                          const Workspace& ws, Scratch& scratch, std::span<double> grad) const;

    ModelConfig cfg_;
    LayoutPtr layout_;
    std::size_t tok_ = 0, pos_ = 0;
    std::vector<LayerOffsets> layer_offsets_;
    HeadOffsets mlm_{}, cls_{};
};

}  // namespace lossscope
