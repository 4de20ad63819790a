#include "slotpi/checkpoint.hpp"

#include <cstring>
#include <fstream>

#include "slotpi/errors.hpp"

namespace slotpi {

namespace {

constexpr char kMagic[8] = {'S', 'L', 'P', 'C', '0', '0', '0', '1'};

void write_doubles(std::ofstream& f, const std::vector<double>& d) {
    f.write(reinterpret_cast<const char*>(d.data()), std::streamsize(d.size() * 8));
}

std::vector<double> read_doubles(std::ifstream& f, std::size_t n) {
    std::vector<double> d(n);
    f.read(reinterpret_cast<char*>(d.data()), std::streamsize(n * 8));
    if (!f) throw FormatError("checkpoint: truncated payload");
    return d;
}

}  // namespace

void save_checkpoint(const std::string& path, const SlotPiModel& model, const RunConfig& cfg,
                     long step, const std::string& rng_state, const AdamState* adam) {
    ParamList params = model.parameters();
    nlohmann::json plist = nlohmann::json::array();
    for (const auto& p : params)
        plist.push_back({{"name", p.name}, {"rows", p.value.rows()}, {"cols", p.value.cols()}});

    nlohmann::json header = {{"config", cfg.to_json()},
                             {"step", step},
                             {"rng", rng_state},
                             {"params", plist},
                             {"has_adam", adam != nullptr}};
    if (adam) header["adam_step"] = adam->step;
    std::string hs = header.dump();

    std::ofstream f(path, std::ios::binary);
    if (!f) throw FormatError("save_checkpoint: cannot open " + path);
    f.write(kMagic, 8);
    std::uint32_t len = std::uint32_t(hs.size());
    f.write(reinterpret_cast<const char*>(&len), 4);
    f.write(hs.data(), hs.size());
    for (const auto& p : params) {
        write_doubles(f, p.value.data());
        if (adam) {
            auto mit = adam->m.find(p.name);
            auto vit = adam->v.find(p.name);
            std::vector<double> zero(p.value.numel(), 0.0);
            write_doubles(f, mit != adam->m.end() ? mit->second : zero);
            write_doubles(f, vit != adam->v.end() ? vit->second : zero);
        }
    }
    if (!f) throw FormatError("save_checkpoint: write failure");
}

CheckpointContents load_checkpoint(const std::string& path, SlotPiModel& model,
                                   const TrajectoryDataset& dataset) {
    std::ifstream f(path, std::ios::binary);
    if (!f) throw FormatError("load_checkpoint: cannot open " + path);
    char magic[8];
    std::uint32_t len = 0;
    if (!f.read(magic, 8) || std::memcmp(magic, kMagic, 8) != 0)
        throw FormatError("load_checkpoint: bad magic");
    f.read(reinterpret_cast<char*>(&len), 4);
    std::string hs(len, '\0');
    f.read(hs.data(), len);
    if (!f) throw FormatError("load_checkpoint: truncated header");

    nlohmann::json header;
    try {
        header = nlohmann::json::parse(hs);
    } catch (const nlohmann::json::exception&) {
        throw FormatError("load_checkpoint: malformed header");
    }

    CheckpointContents out;
    out.config = RunConfig::from_json(header.at("config"));
    out.step = header.at("step").get<long>();
    out.rng_state = header.at("rng").get<std::string>();
    out.has_adam = header.at("has_adam").get<bool>();
    if (out.has_adam) out.adam.step = header.at("adam_step").get<long>();

    model = build_model(out.config, dataset);
    ParamList params = model.parameters();
    const auto& plist = header.at("params");
    if (plist.size() != params.size())
        throw FormatError("load_checkpoint: parameter count mismatch");
    for (std::size_t i = 0; i < params.size(); ++i) {
        const auto& meta = plist.at(i);
        if (meta.at("name").get<std::string>() != params[i].name ||
            meta.at("rows").get<std::size_t>() != params[i].value.rows() ||
            meta.at("cols").get<std::size_t>() != params[i].value.cols())
            throw FormatError("load_checkpoint: parameter layout mismatch at " + params[i].name);
        params[i].value.mutable_data() = read_doubles(f, params[i].value.numel());
        if (out.has_adam) {
            out.adam.m[params[i].name] = read_doubles(f, params[i].value.numel());
            out.adam.v[params[i].name] = read_doubles(f, params[i].value.numel());
        }
    }
    return out;
}

}  // namespace slotpi
