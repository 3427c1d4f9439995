// SPDX-License-Identifier: Apache-2.0
#include "cmc/config.hpp"

#include <fstream>

namespace cmc {

using nlohmann::json;

std::uint64_t fnv1a64(const void* data, std::size_t len) {
    const auto* p = static_cast<const unsigned char*>(data);
    std::uint64_t h = 0xcbf29ce484222325ULL;
    for (std::size_t i = 0; i < len; ++i) {
        h ^= p[i];
        h *= 0x100000001b3ULL;
    }
    return h;
}

namespace {

void reject_unknown_keys(const json& j, std::initializer_list<const char*> allowed,
                         const std::string& where) {
    if (!j.is_object()) throw ConfigError("config: " + where + " must be an object");
    for (const auto& [key, value] : j.items()) {
        bool ok = false;
        for (const char* a : allowed)
            if (key == a) {
                ok = true;
                break;
            }
        if (!ok) throw ConfigError("config: unknown key '" + key + "' in " + where);
    }
}

template <typename T>
T get_or(const json& j, const char* key, T def) {
    if (!j.contains(key)) return def;
    try {
        return j.at(key).get<T>();
    } catch (const json::exception& e) {
        throw ConfigError("config: bad value for '" + std::string(key) + "': " + e.what());
    }
}

Degradation parse_degradation(const json& j, const std::string& where) {
    if (!j.contains("kind")) throw ConfigError("config: " + where + " needs a 'kind'");
    const std::string kind = j.at("kind").get<std::string>();
    Degradation d;
    if (kind == "gaussian_noise") {
        reject_unknown_keys(j, {"kind", "sigma"}, where);
        d.kind = DegradationKind::gaussian_noise;
        d.noise_sigma = get_or(j, "sigma", d.noise_sigma);
        if (d.noise_sigma < 0) throw ConfigError("config: " + where + ": negative sigma");
    } else if (kind == "gaussian_blur") {
        reject_unknown_keys(j, {"kind", "kernel_size", "sigma_min", "sigma_max", "sigma_eval"},
                            where);
        d.kind = DegradationKind::gaussian_blur;
        d.blur_kernel_size = get_or(j, "kernel_size", d.blur_kernel_size);
        d.blur_sigma_min = get_or(j, "sigma_min", d.blur_sigma_min);
        d.blur_sigma_max = get_or(j, "sigma_max", d.blur_sigma_max);
        d.blur_sigma_eval = get_or(j, "sigma_eval", d.blur_sigma_eval);
        if (d.blur_kernel_size < 1 || d.blur_kernel_size % 2 == 0)
            throw ConfigError("config: " + where + ": blur kernel_size must be odd");
        if (d.blur_sigma_min < 0 || d.blur_sigma_max < d.blur_sigma_min)
            throw ConfigError("config: " + where + ": bad blur sigma range");
    } else if (kind == "block_artifact") {
        reject_unknown_keys(j, {"kind", "quality_min", "quality_max", "quality_eval"}, where);
        d.kind = DegradationKind::block_artifact;
        d.quality_min = get_or(j, "quality_min", d.quality_min);
        d.quality_max = get_or(j, "quality_max", d.quality_max);
        d.quality_eval = get_or(j, "quality_eval", d.quality_eval);
        if (d.quality_min < 1 || d.quality_max > 100 || d.quality_max < d.quality_min)
            throw ConfigError("config: " + where + ": quality range must be within [1,100]");
    } else if (kind == "rain_streaks") {
        reject_unknown_keys(j,
                            {"kind", "density", "length_min", "length_max", "angle_min_deg",
                             "angle_max_deg", "intensity_min", "intensity_max"},
                            where);
        d.kind = DegradationKind::rain_streaks;
        d.rain_density = get_or(j, "density", d.rain_density);
        d.rain_length_min = get_or(j, "length_min", d.rain_length_min);
        d.rain_length_max = get_or(j, "length_max", d.rain_length_max);
        d.rain_angle_min_deg = get_or(j, "angle_min_deg", d.rain_angle_min_deg);
        d.rain_angle_max_deg = get_or(j, "angle_max_deg", d.rain_angle_max_deg);
        d.rain_intensity_min = get_or(j, "intensity_min", d.rain_intensity_min);
        d.rain_intensity_max = get_or(j, "intensity_max", d.rain_intensity_max);
        if (d.rain_density < 0 || d.rain_length_max < d.rain_length_min)
            throw ConfigError("config: " + where + ": bad rain parameters");
    } else {
        throw ConfigError("config: " + where + ": unknown degradation kind '" + kind + "'");
    }
    return d;
}

json degradation_to_json(const Degradation& d) {
    json j;
    switch (d.kind) {
        case DegradationKind::gaussian_noise:
            j["kind"] = "gaussian_noise";
            j["sigma"] = d.noise_sigma;
            break;
        case DegradationKind::gaussian_blur:
            j["kind"] = "gaussian_blur";
            j["kernel_size"] = d.blur_kernel_size;
            j["sigma_min"] = d.blur_sigma_min;
            j["sigma_max"] = d.blur_sigma_max;
            j["sigma_eval"] = d.blur_sigma_eval;
            break;
        case DegradationKind::block_artifact:
            j["kind"] = "block_artifact";
            j["quality_min"] = d.quality_min;
            j["quality_max"] = d.quality_max;
            j["quality_eval"] = d.quality_eval;
            break;
        case DegradationKind::rain_streaks:
            j["kind"] = "rain_streaks";
            j["density"] = d.rain_density;
            j["length_min"] = d.rain_length_min;
            j["length_max"] = d.rain_length_max;
            j["angle_min_deg"] = d.rain_angle_min_deg;
            j["angle_max_deg"] = d.rain_angle_max_deg;
            j["intensity_min"] = d.rain_intensity_min;
            j["intensity_max"] = d.rain_intensity_max;
            break;
    }
    return j;
}

}  // namespace

ExperimentConfig parse_config(const json& j) {
    reject_unknown_keys(j,
                        {"seed", "precision", "conv_backend", "output_dir", "dump_images",
                         "network", "schedule", "data", "tasks"},
                        "top level");
    ExperimentConfig c;
    c.seed = get_or<std::uint64_t>(j, "seed", c.seed);
    c.precision = get_or<std::string>(j, "precision", c.precision);
    if (c.precision != "float32" && c.precision != "float64")
        throw ConfigError("config: precision must be 'float32' or 'float64'");
    c.conv_backend = get_or<std::string>(j, "conv_backend", c.conv_backend);
    if (c.conv_backend != "im2col" && c.conv_backend != "naive")
        throw ConfigError("config: conv_backend must be 'im2col' or 'naive'");
    c.output_dir = get_or<std::string>(j, "output_dir", c.output_dir);
    c.dump_images = get_or(j, "dump_images", c.dump_images);

    if (j.contains("network")) {
        const json& n = j.at("network");
        reject_unknown_keys(n,
                            {"channels", "blocks", "kernel", "capacity", "first_last_capacity",
                             "global_skip"},
                            "network");
        c.network.channels = get_or(n, "channels", c.network.channels);
        c.network.blocks = get_or(n, "blocks", c.network.blocks);
        c.network.kernel = get_or(n, "kernel", c.network.kernel);
        c.network.capacity = get_or(n, "capacity", c.network.capacity);
        c.network.first_last_capacity =
            get_or(n, "first_last_capacity", c.network.first_last_capacity);
        c.network.global_skip = get_or(n, "global_skip", c.network.global_skip);
        if (c.network.kernel % 2 == 0)
            throw ConfigError("config: network.kernel must be odd");
    }
    if (j.contains("schedule")) {
        const json& s = j.at("schedule");
        reject_unknown_keys(s, {"base_lr", "halve_every", "beta1", "beta2", "epsilon"},
                            "schedule");
        c.schedule.base_lr = get_or(s, "base_lr", c.schedule.base_lr);
        c.schedule.halve_every = get_or(s, "halve_every", c.schedule.halve_every);
        c.schedule.beta1 = get_or(s, "beta1", c.schedule.beta1);
        c.schedule.beta2 = get_or(s, "beta2", c.schedule.beta2);
        c.schedule.epsilon = get_or(s, "epsilon", c.schedule.epsilon);
        if (!(c.schedule.base_lr > 0)) throw ConfigError("config: base_lr must be positive");
    }
    if (j.contains("data")) {
        const json& d = j.at("data");
        reject_unknown_keys(d, {"image_size", "images_per_task", "eval_images", "image_dir"},
                            "data");
        c.data.image_size = get_or(d, "image_size", c.data.image_size);
        c.data.images_per_task = get_or(d, "images_per_task", c.data.images_per_task);
        c.data.eval_images = get_or(d, "eval_images", c.data.eval_images);
        c.data.image_dir = get_or<std::string>(d, "image_dir", c.data.image_dir);
    }

    if (!j.contains("tasks") || !j.at("tasks").is_array() || j.at("tasks").empty())
        throw ConfigError("config: 'tasks' must be a non-empty array");
    int task_id = 0;
    for (const json& tj : j.at("tasks")) {
        const std::string where = "tasks[" + std::to_string(task_id) + "]";
        reject_unknown_keys(tj,
                            {"name", "degradation", "fraction", "fraction_overrides", "epochs",
                             "batches_per_epoch", "batch_size", "patch_size",
                             "knowledge_sharing"},
                            where);
        TaskSpec t;
        t.task_id = ++task_id;
        t.name = get_or<std::string>(tj, "name", "task" + std::to_string(task_id));
        if (!tj.contains("degradation"))
            throw ConfigError("config: " + where + " needs a 'degradation'");
        t.degradation = parse_degradation(tj.at("degradation"), where + ".degradation");
        t.fraction = get_or(tj, "fraction", t.fraction);
        if (!(t.fraction > 0.0) || t.fraction > 1.0)
            throw ConfigError("config: " + where + ": fraction must be in (0,1]");
        if (tj.contains("fraction_overrides")) {
            if (!tj.at("fraction_overrides").is_object())
                throw ConfigError("config: " + where + ".fraction_overrides must be an object");
            for (const auto& [k, v] : tj.at("fraction_overrides").items())
                t.fraction_overrides[k] = v.get<double>();
        }
        t.epochs = get_or(tj, "epochs", t.epochs);
        t.batches_per_epoch = get_or(tj, "batches_per_epoch", t.batches_per_epoch);
        t.batch_size = get_or(tj, "batch_size", t.batch_size);
        t.patch_size = get_or(tj, "patch_size", t.patch_size);
        t.knowledge_sharing = get_or(tj, "knowledge_sharing", t.knowledge_sharing);
        if (t.epochs < 1 || t.batches_per_epoch < 1 || t.batch_size < 1 || t.patch_size < 8)
            throw ConfigError("config: " + where + ": bad training sizes");
        c.tasks.push_back(std::move(t));
    }
    return c;
}

ExperimentConfig load_config_file(const std::string& path) {
    std::ifstream f(path);
    if (!f) throw ConfigError("config: cannot open " + path);
    json j;
    try {
        f >> j;
    } catch (const json::exception& e) {
        throw ConfigError("config: parse error in " + path + ": " + e.what());
    }
    return parse_config(j);
}

json config_to_json(const ExperimentConfig& c) {
    json j;
    j["seed"] = c.seed;
    j["precision"] = c.precision;
    j["conv_backend"] = c.conv_backend;
    j["output_dir"] = c.output_dir;
    j["dump_images"] = c.dump_images;
    j["network"] = {{"channels", c.network.channels},
                    {"blocks", c.network.blocks},
                    {"kernel", c.network.kernel},
                    {"capacity", c.network.capacity},
                    {"first_last_capacity", c.network.first_last_capacity},
                    {"global_skip", c.network.global_skip}};
    j["schedule"] = {{"base_lr", c.schedule.base_lr},
                     {"halve_every", c.schedule.halve_every},
                     {"beta1", c.schedule.beta1},
                     {"beta2", c.schedule.beta2},
                     {"epsilon", c.schedule.epsilon}};
    j["data"] = {{"image_size", c.data.image_size},
                 {"images_per_task", c.data.images_per_task},
                 {"eval_images", c.data.eval_images},
                 {"image_dir", c.data.image_dir}};
    j["tasks"] = json::array();
    for (const TaskSpec& t : c.tasks) {
        json tj;
        tj["name"] = t.name;
        tj["degradation"] = degradation_to_json(t.degradation);
        tj["fraction"] = t.fraction;
        if (!t.fraction_overrides.empty()) {
            json o;
            for (const auto& [k, v] : t.fraction_overrides) o[k] = v;
            tj["fraction_overrides"] = o;
        }
        tj["epochs"] = t.epochs;
        tj["batches_per_epoch"] = t.batches_per_epoch;
        tj["batch_size"] = t.batch_size;
        tj["patch_size"] = t.patch_size;
        tj["knowledge_sharing"] = t.knowledge_sharing;
        j["tasks"].push_back(tj);
    }
    return j;
}

std::string config_hash(const ExperimentConfig& c) {
    // output_dir is excluded so a resumed run may write elsewhere
    json j = config_to_json(c);
    j.erase("output_dir");
    j.erase("dump_images");
    const std::string dump = j.dump();
    const std::uint64_t h = fnv1a64(dump.data(), dump.size());
    char buf[17];
    std::snprintf(buf, sizeof(buf), "%016llx", static_cast<unsigned long long>(h));
    return std::string(buf);
}

}  // namespace cmc
