#pragma once

#include <memory>
#include <optional>
#include <set>
#include <span>
#include <string>
#include <vector>

namespace lossscope {

// One contiguous span of the flat parameter vector.
struct Segment {
    std::string name;
    std::optional<int> layer_index;  // encoder block index; empty for embeddings and heads
    std::size_t offset = 0;
    std::size_t length = 0;
    bool task_head = false;  // true for task-specific head segments

    bool operator==(const Segment&) const = default;
};

struct ParamLayout;
using LayoutPtr = std::shared_ptr<const ParamLayout>;

struct ParamLayout {
    std::vector<Segment> segments;
    std::size_t total_len = 0;

    // Validates that segments are contiguous, non-overlapping and cover
    // [0, total_len) exactly, and that layer indices are sane.
    static LayoutPtr create(std::vector<Segment> segments);

    const Segment* find(std::string_view name) const;

    // number of encoder layers = max layer_index + 1 (0 if none)
    int num_layers() const;

    bool operator==(const ParamLayout& other) const {
        return total_len == other.total_len && segments == other.segments;
    }
};

bool same_layout(const LayoutPtr& a, const LayoutPtr& b);

// Immutable flat parameter vector. Copies share storage.
class ParamVector {
public:
    ParamVector(LayoutPtr layout, std::vector<double> values, std::string id = {});

    const LayoutPtr& layout() const { return layout_; }
    std::span<const double> values() const { return {storage_->data(), storage_->size()}; }
    double operator[](std::size_t i) const { return (*storage_)[i]; }
    std::size_t size() const { return storage_->size(); }
    const std::string& id() const { return id_; }
    ParamVector with_id(std::string id) const;

    // shared storage handle, used by Direction to remember diff endpoints
    const std::shared_ptr<const std::vector<double>>& storage() const { return storage_; }

private:
    LayoutPtr layout_;
    std::shared_ptr<const std::vector<double>> storage_;
    std::string id_;
};

// A set of encoder layer indices treated as a parameter subspace.
struct LayerGroup {
    std::set<int> layer_indices;
    std::string label;
};

// low / middle / high thirds of [0, num_layers), boundaries rounded down
std::vector<LayerGroup> default_layer_groups(int num_layers);

struct Provenance {
    enum class Kind { diff, masked, rescaled, external };
    Kind kind = Kind::external;
    std::string from_id;      // diff: subtrahend
    std::string to_id;        // diff: minuend
    std::string parent;       // masked / rescaled: description of the source direction
    std::string group_label;  // masked
    double target_norm = 0.0;  // rescaled
    std::string label;         // external

    std::string describe() const;
};

// Difference of two parameter vectors (or a masked/rescaled derivative of
// one). When the direction is an exact per-component difference to[k]-from[k]
// on its support, the endpoint storages are retained so that combine() can
// reconstruct the endpoints bit-exactly.
class Direction {
public:
    Direction(LayoutPtr layout, std::vector<double> values, Provenance prov);

    const LayoutPtr& layout() const { return layout_; }
    std::span<const double> values() const { return {storage_->data(), storage_->size()}; }
    std::size_t size() const { return storage_->size(); }
    const Provenance& provenance() const { return prov_; }

    bool has_endpoints() const { return from_ != nullptr && to_ != nullptr; }
    std::span<const double> endpoint_from() const { return {from_->data(), from_->size()}; }
    std::span<const double> endpoint_to() const { return {to_->data(), to_->size()}; }

private:
    friend Direction diff(const ParamVector&, const ParamVector&);
    friend Direction mask_to_group(const Direction&, const LayerGroup&);
    friend Direction drop_task_head(const Direction&);

    LayoutPtr layout_;
    std::shared_ptr<const std::vector<double>> storage_;
    Provenance prov_;
    std::shared_ptr<const std::vector<double>> from_, to_;
};

struct CombineTerm {
    double coef;
    const Direction* dir;
};

// a - b
Direction diff(const ParamVector& a, const ParamVector& b);

double dot(const Direction& a, const Direction& b);
double norm(const Direction& d);
double norm(std::span<const double> v);

// (target / norm(d)) * d; rejects zero directions and non-positive targets
Direction rescale_to(const Direction& d, double target);

// origin + sum coef_k * dir_k. Terms with coef 0 leave the accumulator
// untouched; coef +/-1 terms on directions with known endpoints substitute the
// stored endpoint component wherever the accumulator sits exactly on the
// opposite endpoint, which makes e.g. combine(theta0, {(1, diff(theta1,
// theta0))}) reproduce theta1 bit-for-bit.
ParamVector combine(const ParamVector& origin, std::span<const CombineTerm> terms);
ParamVector combine(const ParamVector& origin, std::initializer_list<CombineTerm> terms);

// (a.b) / (|a||b|); rejects zero-norm operands
double cosine(const Direction& a, const Direction& b);

// copy components of segments whose layer_index is in g, zero elsewhere
Direction mask_to_group(const Direction& d, const LayerGroup& g);

// zero the task-head segments, keep embeddings and encoder layers
Direction drop_task_head(const Direction& d);

// dst except segments with layer_index in g, which are copied from src
ParamVector splice_group(const ParamVector& dst, const ParamVector& src, const LayerGroup& g);

// dst with task-head segments copied from src
ParamVector splice_task_head(const ParamVector& dst, const ParamVector& src);

// bitwise equality on every non-head segment
bool equal_on_encoder(const ParamVector& a, const ParamVector& b);

}  // namespace lossscope
