#include "lossscope/param_space.hpp"

#include <cmath>
#include <cstdio>
#include <stdexcept>

namespace lossscope {

namespace {

void require(bool cond, const std::string& message) {
    if (!cond) throw std::invalid_argument(message);
}

void require_finite(std::span<const double> values, const std::string& what) {
    for (double v : values) {
        if (!std::isfinite(v)) throw std::invalid_argument(what + " contains a non-finite value");
    }
}

}  // namespace

LayoutPtr ParamLayout::create(std::vector<Segment> segments) {
    auto layout = std::make_shared<ParamLayout>();
    std::size_t cursor = 0;
    for (const Segment& s : segments) {
        require(s.offset == cursor, "layout segments must be contiguous (gap before '" + s.name + "')");
        require(s.length > 0, "layout segment '" + s.name + "' is empty");
        if (s.layer_index) {
            require(*s.layer_index >= 0, "layout segment '" + s.name + "' has a negative layer index");
            require(!s.task_head, "layout segment '" + s.name + "' cannot be both layered and a task head");
        }
        cursor += s.length;
    }
    layout->segments = std::move(segments);
    layout->total_len = cursor;
    require(layout->total_len > 0, "layout covers no parameters");
    return layout;
}

const Segment* ParamLayout::find(std::string_view name) const {
    for (const Segment& s : segments) {
        if (s.name == name) return &s;
    }
    return nullptr;
}

int ParamLayout::num_layers() const {
    int max_index = -1;
    for (const Segment& s : segments) {
        if (s.layer_index && *s.layer_index > max_index) max_index = *s.layer_index;
    }
    return max_index + 1;
}

bool same_layout(const LayoutPtr& a, const LayoutPtr& b) {
    if (a == b) return true;
    if (!a || !b) return false;
    return *a == *b;
}

ParamVector::ParamVector(LayoutPtr layout, std::vector<double> values, std::string id)
    : layout_(std::move(layout)), id_(std::move(id)) {
    require(layout_ != nullptr, "ParamVector needs a layout");
    require(values.size() == layout_->total_len, "ParamVector length " + std::to_string(values.size()) +
                                                     " does not match layout length " +
                                                     std::to_string(layout_->total_len));
    require_finite(values, "ParamVector");
    storage_ = std::make_shared<const std::vector<double>>(std::move(values));
}

ParamVector ParamVector::with_id(std::string id) const {
    ParamVector copy = *this;
    copy.id_ = std::move(id);
    return copy;
}

std::vector<LayerGroup> default_layer_groups(int num_layers) {
    require(num_layers >= 1, "need at least one layer to form groups");
    int b1 = num_layers / 3;
    int b2 = 2 * num_layers / 3;
    LayerGroup low{{}, "low"}, middle{{}, "middle"}, high{{}, "high"};
    for (int l = 0; l < num_layers; ++l) {
        if (l < b1) low.layer_indices.insert(l);
        else if (l < b2) middle.layer_indices.insert(l);
        else high.layer_indices.insert(l);
    }
    return {low, middle, high};
}

std::string Provenance::describe() const {
    switch (kind) {
        case Kind::diff: return "diff(" + to_id + " - " + from_id + ")";
        case Kind::masked: return "masked(" + parent + ", " + group_label + ")";
        case Kind::rescaled: {
            char buf[32];
            std::snprintf(buf, sizeof(buf), "%g", target_norm);
            return "rescaled(" + parent + ", " + buf + ")";
        }
        case Kind::external: return label.empty() ? "<external>" : label;
    }
    return "<unknown>";
}

Direction::Direction(LayoutPtr layout, std::vector<double> values, Provenance prov)
    : layout_(std::move(layout)), prov_(std::move(prov)) {
    require(layout_ != nullptr, "Direction needs a layout");
    require(values.size() == layout_->total_len, "Direction length does not match layout");
    require_finite(values, "Direction");
    storage_ = std::make_shared<const std::vector<double>>(std::move(values));
}

Direction diff(const ParamVector& a, const ParamVector& b) {
    require(same_layout(a.layout(), b.layout()), "diff: layout mismatch between '" + a.id() + "' and '" + b.id() + "'");
    std::vector<double> out(a.size());
    auto av = a.values();
    auto bv = b.values();
    for (std::size_t k = 0; k < out.size(); ++k) out[k] = av[k] - bv[k];
    Provenance prov;
    prov.kind = Provenance::Kind::diff;
    prov.to_id = a.id().empty() ? "<anon>" : a.id();
    prov.from_id = b.id().empty() ? "<anon>" : b.id();
    Direction d(a.layout(), std::move(out), std::move(prov));
    d.to_ = a.storage();
    d.from_ = b.storage();
    return d;
}

double norm(std::span<const double> v) {
    double acc = 0.0;
    for (double x : v) acc += x * x;
    return std::sqrt(acc);
}

double norm(const Direction& d) { return norm(d.values()); }

double dot(const Direction& a, const Direction& b) {
    require(same_layout(a.layout(), b.layout()), "dot: layout mismatch");
    auto av = a.values();
    auto bv = b.values();
    double acc = 0.0;
    for (std::size_t k = 0; k < av.size(); ++k) acc += av[k] * bv[k];
    return acc;
}

Direction rescale_to(const Direction& d, double target) {
    require(target > 0.0, "rescale_to: target norm must be positive");
    double n = norm(d);
    require(n > 0.0, "rescale_to: cannot rescale a zero direction");
    double scale = target / n;
    auto dv = d.values();
    std::vector<double> out(dv.size());
    for (std::size_t k = 0; k < out.size(); ++k) out[k] = scale * dv[k];
    Provenance prov;
    prov.kind = Provenance::Kind::rescaled;
    prov.parent = d.provenance().describe();
    prov.target_norm = target;
    return Direction(d.layout(), std::move(out), std::move(prov));
}

ParamVector combine(const ParamVector& origin, std::span<const CombineTerm> terms) {
    auto ov = origin.values();
    std::vector<double> out(ov.begin(), ov.end());
    for (const CombineTerm& term : terms) {
        require(term.dir != nullptr, "combine: null direction");
        const Direction& d = *term.dir;
        require(same_layout(origin.layout(), d.layout()), "combine: layout mismatch with direction " + d.provenance().describe());
        const double c = term.coef;
        if (c == 0.0) continue;
        auto dv = d.values();
        if ((c == 1.0 || c == -1.0) && d.has_endpoints()) {
            auto from = d.endpoint_from();
            auto to = d.endpoint_to();
            if (c == 1.0) {
                for (std::size_t k = 0; k < out.size(); ++k) {
                    if (dv[k] == 0.0) continue;
                    out[k] = (out[k] == from[k]) ? to[k] : out[k] + dv[k];
                }
            } else {
                for (std::size_t k = 0; k < out.size(); ++k) {
                    if (dv[k] == 0.0) continue;
                    out[k] = (out[k] == to[k]) ? from[k] : out[k] - dv[k];
                }
            }
        } else {
            for (std::size_t k = 0; k < out.size(); ++k) out[k] += c * dv[k];
        }
    }
    return ParamVector(origin.layout(), std::move(out));
}

ParamVector combine(const ParamVector& origin, std::initializer_list<CombineTerm> terms) {
    return combine(origin, std::span<const CombineTerm>(terms.begin(), terms.size()));
}

double cosine(const Direction& a, const Direction& b) {
    double na = norm(a);
    double nb = norm(b);
    require(na > 0.0 && nb > 0.0, "cosine: zero-norm operand");
    return dot(a, b) / (na * nb);
}

namespace {

void check_group(const LayerGroup& g, const ParamLayout& layout) {
    int layers = layout.num_layers();
    for (int idx : g.layer_indices) {
        require(idx >= 0 && idx < layers, "layer group '" + g.label + "' references layer " + std::to_string(idx) +
                                              " outside [0, " + std::to_string(layers) + ")");
    }
}

}  // namespace

Direction mask_to_group(const Direction& d, const LayerGroup& g) {
    check_group(g, *d.layout());
    auto dv = d.values();
    std::vector<double> out(dv.size(), 0.0);
    for (const Segment& s : d.layout()->segments) {
        if (s.layer_index && g.layer_indices.count(*s.layer_index)) {
            for (std::size_t k = s.offset; k < s.offset + s.length; ++k) out[k] = dv[k];
        }
    }
    Provenance prov;
    prov.kind = Provenance::Kind::masked;
    prov.parent = d.provenance().describe();
    prov.group_label = g.label;
    Direction masked(d.layout(), std::move(out), std::move(prov));
    // endpoints stay valid on the surviving support
    masked.from_ = d.from_;
    masked.to_ = d.to_;
    return masked;
}

Direction drop_task_head(const Direction& d) {
    auto dv = d.values();
    std::vector<double> out(dv.begin(), dv.end());
    for (const Segment& s : d.layout()->segments) {
        if (s.task_head) {
            for (std::size_t k = s.offset; k < s.offset + s.length; ++k) out[k] = 0.0;
        }
    }
    Provenance prov;
    prov.kind = Provenance::Kind::masked;
    prov.parent = d.provenance().describe();
    prov.group_label = "encoder";
    Direction masked(d.layout(), std::move(out), std::move(prov));
    masked.from_ = d.from_;
    masked.to_ = d.to_;
    return masked;
}

ParamVector splice_group(const ParamVector& dst, const ParamVector& src, const LayerGroup& g) {
    require(same_layout(dst.layout(), src.layout()), "splice_group: layout mismatch");
    check_group(g, *dst.layout());
    auto dv = dst.values();
    auto sv = src.values();
    std::vector<double> out(dv.begin(), dv.end());
    for (const Segment& s : dst.layout()->segments) {
        if (s.layer_index && g.layer_indices.count(*s.layer_index)) {
            for (std::size_t k = s.offset; k < s.offset + s.length; ++k) out[k] = sv[k];
        }
    }
    return ParamVector(dst.layout(), std::move(out));
}

ParamVector splice_task_head(const ParamVector& dst, const ParamVector& src) {
    require(same_layout(dst.layout(), src.layout()), "splice_task_head: layout mismatch");
    auto dv = dst.values();
    auto sv = src.values();
    std::vector<double> out(dv.begin(), dv.end());
    for (const Segment& s : dst.layout()->segments) {
        if (s.task_head) {
            for (std::size_t k = s.offset; k < s.offset + s.length; ++k) out[k] = sv[k];
        }
    }
    return ParamVector(dst.layout(), std::move(out));
}

bool equal_on_encoder(const ParamVector& a, const ParamVector& b) {
    if (!same_layout(a.layout(), b.layout())) return false;
    auto av = a.values();
    auto bv = b.values();
    for (const Segment& s : a.layout()->segments) {
        if (s.task_head) continue;
        for (std::size_t k = s.offset; k < s.offset + s.length; ++k) {
            if (av[k] != bv[k]) return false;
        }
    }
    return true;
}

}  // namespace lossscope
