// SPDX-License-Identifier: Apache-2.0
#include "cmc/archive.hpp"

#include <cstring>
#include <filesystem>
#include <fstream>

#include <json.hpp>

#include "cmc/config.hpp"

namespace cmc {

using nlohmann::json;

namespace {

constexpr char kMagic[8] = {'C', 'M', 'C', 'K', 'B', 'A', '1', '\0'};
constexpr std::uint32_t kVersion = 1;

struct Writer {
    std::string buf;
    void raw(const void* p, std::size_t n) { buf.append(static_cast<const char*>(p), n); }
    void u8(std::uint8_t v) { raw(&v, 1); }
    void u32(std::uint32_t v) { raw(&v, 4); }
    void u64(std::uint64_t v) { raw(&v, 8); }
    void i32(std::int32_t v) { raw(&v, 4); }
    void f64(double v) { raw(&v, 8); }
    void str(const std::string& s) {
        u32(static_cast<std::uint32_t>(s.size()));
        raw(s.data(), s.size());
    }
    template <typename T>
    void scalars(const std::vector<T>& v) {
        raw(v.data(), v.size() * sizeof(T));
    }
};

struct Reader {
    const char* p;
    const char* end;
    void need(std::size_t n) const {
        if (static_cast<std::size_t>(end - p) < n)
            throw IoError("archive: truncated payload");
    }
    void raw(void* out, std::size_t n) {
        need(n);
        std::memcpy(out, p, n);
        p += n;
    }
    std::uint8_t u8() {
        std::uint8_t v;
        raw(&v, 1);
        return v;
    }
    std::uint32_t u32() {
        std::uint32_t v;
        raw(&v, 4);
        return v;
    }
    std::uint64_t u64() {
        std::uint64_t v;
        raw(&v, 8);
        return v;
    }
    std::int32_t i32() {
        std::int32_t v;
        raw(&v, 4);
        return v;
    }
    double f64() {
        double v;
        raw(&v, 8);
        return v;
    }
    std::string str() {
        const std::uint32_t n = u32();
        need(n);
        std::string s(p, n);
        p += n;
        return s;
    }
    template <typename T>
    void scalars(std::vector<T>& v, std::size_t count) {
        v.resize(count);
        raw(v.data(), count * sizeof(T));
    }
};

json meta_to_json(const ArchiveMeta& m) {
    json j;
    j["config_hash"] = m.config_hash;
    j["seed"] = m.seed;
    j["precision"] = m.precision;
    j["frozen_through"] = m.frozen_through;
    j["geometry"] = {{"img_channels", m.geometry.img_channels},
                     {"channels", m.geometry.channels},
                     {"blocks", m.geometry.blocks},
                     {"kernel", m.geometry.kernel},
                     {"capacity", m.geometry.capacity},
                     {"first_last_capacity", m.geometry.first_last_capacity},
                     {"global_skip", m.geometry.global_skip}};
    j["tasks"] = json::array();
    for (const TaskRegistryEntry& t : m.tasks)
        j["tasks"].push_back({{"task_id", t.task_id},
                              {"name", t.name},
                              {"knowledge_sharing", t.knowledge_sharing}});
    j["report"] = json::array();
    for (const ReportEntry& e : m.report)
        j["report"].push_back({{"task_id", e.task_id},
                               {"after_task", e.after_task},
                               {"psnr", e.psnr},
                               {"ssim", e.ssim}});
    return j;
}

ArchiveMeta meta_from_json(const json& j) {
    ArchiveMeta m;
    m.config_hash = j.at("config_hash").get<std::string>();
    m.seed = j.at("seed").get<std::uint64_t>();
    m.precision = j.at("precision").get<std::string>();
    m.frozen_through = j.at("frozen_through").get<int>();
    const json& g = j.at("geometry");
    m.geometry.img_channels = g.at("img_channels").get<int>();
    m.geometry.channels = g.at("channels").get<int>();
    m.geometry.blocks = g.at("blocks").get<int>();
    m.geometry.kernel = g.at("kernel").get<int>();
    m.geometry.capacity = g.at("capacity").get<int>();
    m.geometry.first_last_capacity = g.at("first_last_capacity").get<int>();
    m.geometry.global_skip = g.at("global_skip").get<bool>();
    for (const json& t : j.at("tasks"))
        m.tasks.push_back({t.at("task_id").get<int>(), t.at("name").get<std::string>(),
                           t.at("knowledge_sharing").get<bool>()});
    for (const json& e : j.at("report"))
        m.report.push_back({e.at("task_id").get<int>(), e.at("after_task").get<int>(),
                            e.at("psnr").get<double>(), e.at("ssim").get<double>()});
    return m;
}

std::string read_and_verify_payload(const std::string& path) {
    std::ifstream f(path, std::ios::binary);
    if (!f) throw IoError("archive: cannot open " + path);
    std::string all((std::istreambuf_iterator<char>(f)), std::istreambuf_iterator<char>());
    if (all.size() < 8 + 4 + 8 + 8 || std::memcmp(all.data(), kMagic, 8) != 0)
        throw IoError("archive: " + path + " is not a knowledge-base archive");
    std::uint32_t version;
    std::memcpy(&version, all.data() + 8, 4);
    if (version != kVersion)
        throw IoError("archive: " + path + " has version " + std::to_string(version) +
                      ", expected " + std::to_string(kVersion));
    std::uint64_t payload_size, checksum;
    std::memcpy(&payload_size, all.data() + 12, 8);
    std::memcpy(&checksum, all.data() + 20, 8);
    const std::size_t header = 28;
    if (all.size() - header != payload_size)
        throw IoError("archive: " + path + " is truncated or padded (expected " +
                      std::to_string(payload_size) + " payload bytes, found " +
                      std::to_string(all.size() - header) + ")");
    const std::string payload = all.substr(header);
    if (fnv1a64(payload.data(), payload.size()) != checksum)
        throw IoError("archive: checksum mismatch in " + path + "; file is corrupt");
    return payload;
}

template <typename T>
constexpr std::uint8_t scalar_code() {
    return sizeof(T) == 4 ? 4 : 8;
}

}  // namespace

template <typename T>
void save_archive(const std::string& path, const RestorationNet<T>& net,
                  const ArchiveMeta& meta) {
    Writer w;
    w.str(meta_to_json(meta).dump());
    w.u32(static_cast<std::uint32_t>(net.layer_count()));
    for (int li = 0; li < net.layer_count(); ++li) {
        const CmcLayer<T>& layer = net.layer(li);
        const auto snap = layer.snapshot();
        w.str(layer.name());
        w.i32(snap.k_in);
        w.i32(snap.k_out);
        w.i32(snap.n);
        w.i32(snap.t);
        w.u8(scalar_code<T>());
        w.i32(snap.frozen_through);
        w.i32(static_cast<std::int32_t>(snap.masks.size()));
        w.scalars(snap.memory);
        for (std::size_t ti = 0; ti < snap.masks.size(); ++ti) {
            w.i32(snap.masks[ti].task_id);
            w.f64(snap.masks[ti].fraction);
            w.u8(snap.sharing[ti]);
            const auto& words = snap.masks[ti].bits.words();
            w.u64(words.size());
            w.raw(words.data(), words.size() * 8);
            w.scalars(snap.vectors[ti].values);
            w.scalars(snap.biases[ti]);
        }
    }

    std::string file;
    file.append(kMagic, 8);
    const std::uint32_t version = kVersion;
    file.append(reinterpret_cast<const char*>(&version), 4);
    const std::uint64_t payload_size = w.buf.size();
    file.append(reinterpret_cast<const char*>(&payload_size), 8);
    const std::uint64_t checksum = fnv1a64(w.buf.data(), w.buf.size());
    file.append(reinterpret_cast<const char*>(&checksum), 8);
    file += w.buf;

    const std::string tmp = path + ".tmp";
    {
        std::ofstream f(tmp, std::ios::binary | std::ios::trunc);
        if (!f) throw IoError("archive: cannot write " + tmp);
        f.write(file.data(), static_cast<std::streamsize>(file.size()));
        f.flush();
        if (!f) throw IoError("archive: write failed for " + tmp);
    }
    std::filesystem::rename(tmp, path);
}

ArchiveMeta peek_archive_meta(const std::string& path) {
    const std::string payload = read_and_verify_payload(path);
    Reader r{payload.data(), payload.data() + payload.size()};
    return meta_from_json(json::parse(r.str()));
}

template <typename T>
std::pair<ArchiveMeta, RestorationNet<T>> load_archive(const std::string& path) {
    const std::string payload = read_and_verify_payload(path);
    Reader r{payload.data(), payload.data() + payload.size()};
    const ArchiveMeta meta = meta_from_json(json::parse(r.str()));

    const char* want = sizeof(T) == 4 ? "float32" : "float64";
    if (meta.precision != want)
        throw ConfigError("archive: " + path + " stores " + meta.precision +
                          " parameters but the run is configured for " + want);

    RestorationNet<T> net(meta.geometry);
    const std::uint32_t layer_count = r.u32();
    if (static_cast<int>(layer_count) != net.layer_count())
        throw ConfigError("archive: " + path + " has " + std::to_string(layer_count) +
                          " layers but the configured geometry builds " +
                          std::to_string(net.layer_count()));
    for (std::uint32_t li = 0; li < layer_count; ++li) {
        const std::string name = r.str();
        typename CmcLayer<T>::Snapshot snap;
        snap.k_in = r.i32();
        snap.k_out = r.i32();
        snap.n = r.i32();
        snap.t = r.i32();
        const std::uint8_t code = r.u8();
        if (code != scalar_code<T>())
            throw IoError("archive: scalar width mismatch in layer '" + name + "'");
        snap.frozen_through = r.i32();
        const std::int32_t task_count = r.i32();
        const CmcLayer<T>& expect = net.layer(static_cast<int>(li));
        if (name != expect.name() || snap.k_in != expect.k_in() || snap.k_out != expect.k_out() ||
            snap.n != expect.kernel_size())
            throw ConfigError("archive: layer '" + name + "' (" + std::to_string(snap.k_in) +
                              "->" + std::to_string(snap.k_out) + ", n=" + std::to_string(snap.n) +
                              ") does not match configured layer '" + expect.name() + "' (" +
                              std::to_string(expect.k_in()) + "->" +
                              std::to_string(expect.k_out()) +
                              ", n=" + std::to_string(expect.kernel_size()) + ")");
        const i64 total = static_cast<i64>(snap.t) * snap.k_in * snap.k_out * snap.n * snap.n;
        r.scalars(snap.memory, static_cast<std::size_t>(total));
        for (std::int32_t ti = 0; ti < task_count; ++ti) {
            TaskMask mask;
            mask.task_id = r.i32();
            mask.fraction = r.f64();
            snap.sharing.push_back(r.u8());
            const std::uint64_t words = r.u64();
            mask.bits = MaskBits(total);
            if (words != mask.bits.words().size())
                throw IoError("archive: bitmap size mismatch in layer '" + name + "'");
            r.raw(mask.bits.words_mut().data(), words * 8);
            snap.masks.push_back(std::move(mask));
            TaskVector<T> vec;
            vec.task_id = snap.masks.back().task_id;
            r.scalars(vec.values, static_cast<std::size_t>(snap.t));
            snap.vectors.push_back(std::move(vec));
            std::vector<T> bias;
            r.scalars(bias, static_cast<std::size_t>(snap.k_out));
            snap.biases.push_back(std::move(bias));
        }
        net.layer(static_cast<int>(li)) =
            CmcLayer<T>::from_snapshot(name, std::move(snap), expect.init_scale());
    }
    return {meta, std::move(net)};
}

template void save_archive(const std::string&, const RestorationNet<float>&, const ArchiveMeta&);
template void save_archive(const std::string&, const RestorationNet<double>&, const ArchiveMeta&);
template std::pair<ArchiveMeta, RestorationNet<float>> load_archive(const std::string&);
template std::pair<ArchiveMeta, RestorationNet<double>> load_archive(const std::string&);

}  // namespace cmc
