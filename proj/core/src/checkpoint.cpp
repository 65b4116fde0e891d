#include "irfs/checkpoint.hpp"

#include <cstring>
#include <fstream>

#include "config_json.hpp"

namespace irfs::ckpt {

namespace {

constexpr char kMagic[8] = {'I', 'R', 'F', 'S', 'C', 'K', 'P', '1'};

using nlohmann::json;

void write_all(std::ofstream& out, const void* p, size_t n) {
    out.write(static_cast<const char*>(p), std::streamsize(n));
}

void read_all(std::ifstream& in, void* p, size_t n, const fs::path& path) {
    in.read(static_cast<char*>(p), std::streamsize(n));
    if (in.gcount() != std::streamsize(n))
        throw CheckpointError("truncated checkpoint: " + path.string());
}

void save_archive(const fs::path& path, const std::string& kind, const json& config,
                  const nn::ParamRegistry& params, const nn::Adam* opt) {
    json header;
    header["version"] = 1;
    header["kind"] = kind;
    header["config"] = config;
    json plist = json::array();
    for (const auto& [name, v] : params.items())
        plist.push_back({{"name", name}, {"shape", v.value().shape()}});
    header["params"] = plist;
    header["optimizer"] = opt ? json{{"present", true}, {"t", opt->t()}}
                              : json{{"present", false}};
    const std::string htext = header.dump();

    if (!path.parent_path().empty()) fs::create_directories(path.parent_path());
    std::ofstream out(path, std::ios::binary | std::ios::trunc);
    if (!out) throw CheckpointError("cannot write checkpoint: " + path.string());
    write_all(out, kMagic, sizeof kMagic);
    const uint64_t hlen = htext.size();
    write_all(out, &hlen, sizeof hlen);
    write_all(out, htext.data(), htext.size());
    for (const auto& [_, v] : params.items())
        write_all(out, v.value().data(), size_t(v.value().numel()) * sizeof(double));
    if (opt) {
        for (const Tensor& t : opt->m_state())
            write_all(out, t.data(), size_t(t.numel()) * sizeof(double));
        for (const Tensor& t : opt->v_state())
            write_all(out, t.data(), size_t(t.numel()) * sizeof(double));
    }
    if (!out) throw CheckpointError("write failure on checkpoint: " + path.string());
}

json load_header(std::ifstream& in, const fs::path& path, const std::string& want_kind) {
    char magic[8];
    read_all(in, magic, sizeof magic, path);
    if (std::memcmp(magic, kMagic, sizeof kMagic) != 0)
        throw CheckpointError("not a checkpoint archive: " + path.string());
    uint64_t hlen = 0;
    read_all(in, &hlen, sizeof hlen, path);
    if (hlen > (64u << 20)) throw CheckpointError("corrupt header length in " + path.string());
    std::string htext(size_t(hlen), '\0');
    read_all(in, htext.data(), htext.size(), path);
    json header;
    try {
        header = json::parse(htext);
    } catch (const json::parse_error&) {
        throw CheckpointError("corrupt checkpoint header: " + path.string());
    }
    if (header.value("version", 0) != 1)
        throw CheckpointError("unsupported checkpoint version in " + path.string());
    if (header.value("kind", "") != want_kind)
        throw CheckpointError("checkpoint " + path.string() + " holds a \"" +
                              header.value("kind", "?") + "\" net, expected \"" + want_kind + "\"");
    return header;
}

void load_archive(const fs::path& path, const std::string& kind, const json& expect_config,
                  nn::ParamRegistry& params, nn::Adam* opt) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw CheckpointError("cannot open checkpoint: " + path.string());
    const json header = load_header(in, path, kind);

    if (header.at("config") != expect_config)
        throw CheckpointError("checkpoint config mismatch in " + path.string() +
                              ": archive was written for a different architecture");

    const json& plist = header.at("params");
    const auto& items = params.items();
    if (plist.size() != items.size())
        throw CheckpointError("checkpoint parameter count mismatch in " + path.string());
    for (size_t i = 0; i < items.size(); ++i) {
        const auto& [name, v] = items[i];
        if (plist[i].at("name") != name ||
            plist[i].at("shape").get<std::vector<int64_t>>() != v.value().shape())
            throw CheckpointError("checkpoint parameter layout mismatch at \"" + name + "\" in " +
                                  path.string());
    }
    for (auto& [_, v] : items)
        read_all(in, const_cast<ag::Var&>(v).value().data(),
                 size_t(v.value().numel()) * sizeof(double), path);

    const json& oj = header.at("optimizer");
    if (opt) {
        if (!oj.value("present", false))
            throw CheckpointError("checkpoint " + path.string() + " has no optimizer state");
        std::vector<Tensor> m, v;
        for (const auto& [_, p] : items) {
            Tensor t(p.value().shape());
            read_all(in, t.data(), size_t(t.numel()) * sizeof(double), path);
            m.push_back(std::move(t));
        }
        for (const auto& [_, p] : items) {
            Tensor t(p.value().shape());
            read_all(in, t.data(), size_t(t.numel()) * sizeof(double), path);
            v.push_back(std::move(t));
        }
        opt->restore_state(oj.value("t", int64_t(0)), std::move(m), std::move(v));
    }
}

json read_config_json(const fs::path& path, const std::string& kind) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw CheckpointError("cannot open checkpoint: " + path.string());
    return load_header(in, path, kind).at("config");
}

} // namespace

void save_fusion(const fs::path& path, const FusionNet& net, const nn::Adam* opt) {
    save_archive(path, "fusion", cfgjson::to_json(net.config()), net.params(), opt);
}

void load_fusion(const fs::path& path, FusionNet& net, nn::Adam* opt) {
    load_archive(path, "fusion", cfgjson::to_json(net.config()), net.params(), opt);
}

FusionNetConfig read_fusion_config(const fs::path& path) {
    return cfgjson::fusion_from_json(read_config_json(path, "fusion"));
}

void save_sod(const fs::path& path, const SodNet& net, const nn::Adam* opt) {
    save_archive(path, "sod", cfgjson::to_json(net.config()), net.params(), opt);
}

void load_sod(const fs::path& path, SodNet& net, nn::Adam* opt) {
    load_archive(path, "sod", cfgjson::to_json(net.config()), net.params(), opt);
}

SodNetConfig read_sod_config(const fs::path& path) {
    return cfgjson::sod_from_json(read_config_json(path, "sod"));
}

} // namespace irfs::ckpt
