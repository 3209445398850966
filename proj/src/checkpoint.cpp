#include "lvseg/checkpoint.hpp"

#include <fstream>
#include <stdexcept>

#include "json.hpp"

namespace lvseg {

using nlohmann::json;

void save_checkpoint(const ModelCheckpoint& ckpt, const std::string& path) {
    const auto params = ckpt.model.params();
    const auto buffers = ckpt.model.buffers();
    const auto pnames = ckpt.model.param_names();
    const auto bnames = ckpt.model.buffer_names();

    json tensors = json::array();
    auto add = [&tensors](const std::string& name, const Tensor& t) {
        tensors.push_back({{"name", name}, {"shape", t.shape}});
    };
    for (std::size_t i = 0; i < params.size(); ++i) add(pnames[i], *params[i]);
    for (std::size_t i = 0; i < buffers.size(); ++i) add(bnames[i], *buffers[i]);

    json j;
    j["format"] = "lvseg-checkpoint-v1";
    j["config"] = {{"levels", ckpt.config.levels},
                   {"base_filters", ckpt.config.base_filters},
                   {"input_h", ckpt.config.input_h},
                   {"input_w", ckpt.config.input_w},
                   {"in_channels", ckpt.config.in_channels},
                   {"out_channels", ckpt.config.out_channels}};
    j["epoch"] = ckpt.epoch;
    j["stopped_epoch"] = ckpt.stopped_epoch;
    j["train_loss"] = ckpt.train_loss_history;
    j["val_loss"] = ckpt.val_loss_history;
    j["tensors"] = std::move(tensors);

    std::ofstream out(path, std::ios::binary | std::ios::trunc);
    if (!out) throw std::runtime_error("cannot write checkpoint: " + path);
    out << j.dump() << '\n';
    auto write_tensor = [&out](const Tensor& t) {
        out.write(reinterpret_cast<const char*>(t.data.data()),
                  static_cast<std::streamsize>(t.data.size() * sizeof(double)));
    };
    for (const Tensor* t : params) write_tensor(*t);
    for (const Tensor* t : buffers) write_tensor(*t);
    if (!out) throw std::runtime_error("checkpoint write failed: " + path);
}

ModelCheckpoint load_checkpoint(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw std::runtime_error("cannot open checkpoint: " + path);
    std::string line;
    if (!std::getline(in, line)) throw std::runtime_error("checkpoint: missing manifest");
    json j;
    try {
        j = json::parse(line);
    } catch (const json::exception& e) {
        throw std::runtime_error(std::string("checkpoint: malformed manifest: ") + e.what());
    }
    if (j.value("format", "") != "lvseg-checkpoint-v1")
        throw std::runtime_error("checkpoint: unknown format tag");

    ModelCheckpoint ckpt;
    const auto& jc = j.at("config");
    ckpt.config.levels = jc.at("levels").get<int>();
    ckpt.config.base_filters = jc.at("base_filters").get<int>();
    ckpt.config.input_h = jc.at("input_h").get<int>();
    ckpt.config.input_w = jc.at("input_w").get<int>();
    ckpt.config.in_channels = jc.at("in_channels").get<int>();
    ckpt.config.out_channels = jc.at("out_channels").get<int>();
    ckpt.epoch = j.value("epoch", 0);
    ckpt.stopped_epoch = j.value("stopped_epoch", 0);
    ckpt.train_loss_history = j.value("train_loss", std::vector<double>{});
    ckpt.val_loss_history = j.value("val_loss", std::vector<double>{});

    // seed value is irrelevant: every tensor is overwritten below
    ckpt.model = UNet::he_init(ckpt.config, 0);
    auto params = ckpt.model.params();
    auto buffers = ckpt.model.buffers();
    auto pnames = ckpt.model.param_names();
    auto bnames = ckpt.model.buffer_names();

    const auto& tensors = j.at("tensors");
    if (tensors.size() != params.size() + buffers.size())
        throw std::runtime_error("checkpoint: tensor count does not match the architecture");

    auto read_tensor = [&in, &path](Tensor& t, const json& meta, const std::string& want_name) {
        if (meta.at("name").get<std::string>() != want_name)
            throw std::runtime_error("checkpoint: tensor order mismatch at " + want_name);
        const auto shape = meta.at("shape").get<std::vector<std::size_t>>();
        if (shape != t.shape)
            throw std::runtime_error("checkpoint: shape mismatch for " + want_name);
        in.read(reinterpret_cast<char*>(t.data.data()),
                static_cast<std::streamsize>(t.data.size() * sizeof(double)));
        if (static_cast<std::size_t>(in.gcount()) != t.data.size() * sizeof(double))
            throw std::runtime_error("checkpoint: payload truncated in " + path);
    };
    std::size_t idx = 0;
    for (std::size_t i = 0; i < params.size(); ++i, ++idx) read_tensor(*params[i], tensors[idx], pnames[i]);
    for (std::size_t i = 0; i < buffers.size(); ++i, ++idx) read_tensor(*buffers[i], tensors[idx], bnames[i]);
    char extra;
    if (in.read(&extra, 1); in.gcount() != 0)
        throw std::runtime_error("checkpoint: trailing bytes in " + path);
    return ckpt;
}

}  // namespace lvseg
