#pragma once

// nlohmann ADL hooks for the config and layout types

#include <json.hpp>

#include "lossscope/model.hpp"
#include "lossscope/training.hpp"

namespace lossscope {

inline void to_json(nlohmann::json& j, const ModelConfig& c) {
    j = {{"num_layers", c.num_layers}, {"model_dim", c.model_dim},   {"num_heads", c.num_heads},
         {"ffn_dim", c.ffn_dim},       {"vocab_size", c.vocab_size}, {"max_seq_len", c.max_seq_len},
         {"num_classes", c.num_classes}};
}

inline void from_json(const nlohmann::json& j, ModelConfig& c) {
    j.at("num_layers").get_to(c.num_layers);
    j.at("model_dim").get_to(c.model_dim);
    j.at("num_heads").get_to(c.num_heads);
    j.at("ffn_dim").get_to(c.ffn_dim);
    j.at("vocab_size").get_to(c.vocab_size);
    j.at("max_seq_len").get_to(c.max_seq_len);
    j.at("num_classes").get_to(c.num_classes);
}

inline void to_json(nlohmann::json& j, const TrainConfig& c) {
    j = {{"epochs", c.epochs},
         {"batch_size", c.batch_size},
         {"learning_rate", c.learning_rate},
         {"adam_beta1", c.adam_beta1},
         {"adam_beta2", c.adam_beta2},
         {"adam_eps", c.adam_eps},
         {"seed", c.seed},
         {"objective", head_kind_name(c.objective)},
         {"mask_prob", c.mask_prob}};
}

inline void from_json(const nlohmann::json& j, TrainConfig& c) {
    j.at("epochs").get_to(c.epochs);
    j.at("batch_size").get_to(c.batch_size);
    j.at("learning_rate").get_to(c.learning_rate);
    j.at("adam_beta1").get_to(c.adam_beta1);
    j.at("adam_beta2").get_to(c.adam_beta2);
    j.at("adam_eps").get_to(c.adam_eps);
    j.at("seed").get_to(c.seed);
    c.objective = head_kind_from_name(j.at("objective").get<std::string>());
    j.at("mask_prob").get_to(c.mask_prob);
    // workers intentionally not serialized: results must not depend on it
}

inline void to_json(nlohmann::json& j, const Segment& s) {
    j = {{"name", s.name},
         {"layer", s.layer_index ? nlohmann::json(*s.layer_index) : nlohmann::json(nullptr)},
         {"offset", s.offset},
         {"length", s.length},
         {"task_head", s.task_head}};
}

inline void from_json(const nlohmann::json& j, Segment& s) {
    j.at("name").get_to(s.name);
    if (j.at("layer").is_null()) {
        s.layer_index.reset();
    } else {
        s.layer_index = j.at("layer").get<int>();
    }
    j.at("offset").get_to(s.offset);
    j.at("length").get_to(s.length);
    j.at("task_head").get_to(s.task_head);
}

}  // namespace lossscope
