#include "lossscope/checkpoint_io.hpp"

#include <bit>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <stdexcept>

#include "lossscope/json_conv.hpp"

namespace lossscope {

namespace {

constexpr const char* kCkptFormat = "lossscope-ckpt";
constexpr const char* kRunFormat = "lossscope-run";

void write_f64_le(std::ostream& out, std::span<const double> values) {
    std::vector<unsigned char> bytes(values.size() * 8);
    for (std::size_t i = 0; i < values.size(); ++i) {
        std::uint64_t bits = std::bit_cast<std::uint64_t>(values[i]);
        for (int b = 0; b < 8; ++b) bytes[i * 8 + b] = (unsigned char)(bits >> (8 * b));
    }
    out.write(reinterpret_cast<const char*>(bytes.data()), std::streamsize(bytes.size()));
}

std::vector<double> read_f64_le(std::istream& in, std::size_t count) {
    std::vector<unsigned char> bytes(count * 8);
    in.read(reinterpret_cast<char*>(bytes.data()), std::streamsize(bytes.size()));
    if (std::size_t(in.gcount()) != bytes.size()) throw std::runtime_error("checkpoint truncated");
    std::vector<double> values(count);
    for (std::size_t i = 0; i < count; ++i) {
        std::uint64_t bits = 0;
        for (int b = 0; b < 8; ++b) bits |= std::uint64_t(bytes[i * 8 + b]) << (8 * b);
        values[i] = std::bit_cast<double>(bits);
    }
    return values;
}

}  // namespace

std::string checkpoint_filename(int epoch_index) {
    char buf[32];
    std::snprintf(buf, sizeof(buf), "epoch_%04d.ckpt", epoch_index);
    return buf;
}

void write_checkpoint(const std::string& path, const ModelConfig& model, const Checkpoint& checkpoint) {
    nlohmann::json header = {
        {"format", kCkptFormat},
        {"version", 1},
        {"epoch_index", checkpoint.epoch_index},
        {"metrics",
         {{"train_loss", checkpoint.train_loss},
          {"dev_loss", checkpoint.dev_loss},
          {"dev_error", checkpoint.dev_error}}},
        {"model", model},
        {"layout", checkpoint.params.layout()->segments},
        {"total_len", checkpoint.params.layout()->total_len},
        {"id", checkpoint.params.id()},
    };
    std::ofstream out(path, std::ios::binary);
    if (!out) throw std::runtime_error("cannot write checkpoint: " + path);
    out << header.dump() << "\n";
    write_f64_le(out, checkpoint.params.values());
    if (!out) throw std::runtime_error("failed while writing checkpoint: " + path);
}

LoadedCheckpoint read_checkpoint(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw std::runtime_error("cannot read checkpoint: " + path);
    std::string line;
    if (!std::getline(in, line)) throw std::runtime_error("checkpoint has no header: " + path);
    nlohmann::json header = nlohmann::json::parse(line);
    if (header.value("format", "") != kCkptFormat) throw std::runtime_error("not a checkpoint file: " + path);

    ModelConfig model = header.at("model").get<ModelConfig>();
    auto segments = header.at("layout").get<std::vector<Segment>>();
    LayoutPtr layout = ParamLayout::create(std::move(segments));
    std::size_t total = header.at("total_len").get<std::size_t>();
    if (total != layout->total_len) throw std::runtime_error("checkpoint layout length mismatch: " + path);

    std::vector<double> values = read_f64_le(in, total);
    ParamVector params(layout, std::move(values), header.value("id", ""));
    Checkpoint ckpt{header.at("epoch_index").get<int>(), std::move(params),
                    header.at("metrics").at("train_loss").get<double>(),
                    header.at("metrics").at("dev_loss").get<double>(),
                    header.at("metrics").at("dev_error").get<double>()};
    return {model, std::move(ckpt)};
}

void write_run_dir(const std::string& dir, const TrainRun& run) {
    std::filesystem::create_directories(dir);
    std::vector<std::string> files;
    for (const Checkpoint& c : run.checkpoints) {
        std::string name = checkpoint_filename(c.epoch_index);
        write_checkpoint(dir + "/" + name, run.model, c);
        files.push_back(name);
    }
    nlohmann::json meta = {
        {"format", kRunFormat},
        {"version", 1},
        {"kind", run_kind_name(run.kind)},
        {"from_run", run.from_run},
        {"label", run.label},
        {"task", run.task_name},
        {"model", run.model},
        {"config", run.config},
        {"checkpoints", files},
    };
    std::ofstream out(dir + "/run.json", std::ios::binary);
    if (!out) throw std::runtime_error("cannot write run.json in " + dir);
    out << meta.dump(2) << "\n";
}

TrainRun read_run_dir(const std::string& dir) {
    std::ifstream in(dir + "/run.json", std::ios::binary);
    if (!in) throw std::runtime_error("cannot read run.json in " + dir);
    nlohmann::json meta = nlohmann::json::parse(in);
    if (meta.value("format", "") != kRunFormat) throw std::runtime_error("not a run directory: " + dir);

    TrainRun run;
    run.kind = run_kind_from_name(meta.at("kind").get<std::string>());
    run.from_run = meta.value("from_run", "");
    run.label = meta.at("label").get<std::string>();
    run.task_name = meta.at("task").get<std::string>();
    run.model = meta.at("model").get<ModelConfig>();
    run.config = meta.at("config").get<TrainConfig>();
    for (const auto& name : meta.at("checkpoints").get<std::vector<std::string>>()) {
        LoadedCheckpoint loaded = read_checkpoint(dir + "/" + name);
        if (!(loaded.model == run.model)) throw std::runtime_error("checkpoint model mismatch in " + dir);
        run.checkpoints.push_back(std::move(loaded.checkpoint));
    }
    if (run.checkpoints.empty()) throw std::runtime_error("run has no checkpoints: " + dir);
    for (std::size_t i = 0; i < run.checkpoints.size(); ++i) {
        if (run.checkpoints[i].epoch_index != int(i)) {
            throw std::runtime_error("run checkpoints are not consecutive in " + dir);
        }
    }
    return run;
}

}  // namespace lossscope
