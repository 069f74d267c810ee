#include "sci/synthdata.hpp"

#include <algorithm>
#include <array>
#include <cstring>
#include <fstream>
#include <map>
#include <set>

#include <nlohmann/json.hpp>

namespace sci {

using ordered_json = nlohmann::ordered_json;

std::string to_string(CameraPreset preset) {
    return preset == CameraPreset::Ltcc ? "ltcc" : "prcc";
}

std::string to_string(Split split) {
    switch (split) {
    case Split::Train: return "train";
    case Split::Query: return "query";
    case Split::Gallery: return "gallery";
    }
    return "train";
}

CameraPreset camera_preset_from_string(const std::string& name) {
    if (name == "ltcc") return CameraPreset::Ltcc;
    if (name == "prcc") return CameraPreset::Prcc;
    throw ContractError("unknown camera preset '" + name + "' (valid: ltcc, prcc)");
}

Split split_from_string(const std::string& name) {
    if (name == "train") return Split::Train;
    if (name == "query") return Split::Query;
    if (name == "gallery") return Split::Gallery;
    throw DataError("unknown split '" + name + "'");
}

void SynthConfig::validate() const {
    auto positive = [](int v, const char* field) {
        if (v < 1) throw ContractError(std::string("synth config: ") + field + " must be >= 1");
    };
    positive(num_pids, "num_pids");
    positive(outfits_per_pid, "outfits_per_pid");
    positive(cams, "cams");
    positive(images_per, "images_per");
    positive(height, "height");
    positive(width, "width");
    if (id_signal < 0.0f || id_signal > 1.0f)
        throw ContractError("synth config: id_signal must be in [0,1]");
    if (clo_signal < 0.0f || clo_signal > 1.0f)
        throw ContractError("synth config: clo_signal must be in [0,1]");
    if (noise_sigma < 0.0f) throw ContractError("synth config: noise_sigma must be >= 0");
    if (preset == CameraPreset::Prcc && cams < 3)
        throw ContractError("synth config: prcc preset needs cams >= 3");
    if (preset == CameraPreset::Prcc && outfits_per_pid < 2)
        throw ContractError("synth config: prcc preset needs outfits_per_pid >= 2");
}

std::span<const float> Dataset::image(int i) const {
    const size_t n = static_cast<size_t>(image_numel());
    return std::span<const float>(images.data() + static_cast<size_t>(i) * n, n);
}

std::vector<int> Dataset::split_indices(Split split) const {
    std::vector<int> out;
    for (int i = 0; i < size(); ++i)
        if (meta[static_cast<size_t>(i)].split == split) out.push_back(i);
    return out;
}

std::vector<int> Dataset::pids_in_split(Split split) const {
    std::set<int> pids;
    for (const SampleMeta& m : meta)
        if (m.split == split) pids.insert(m.pid);
    return std::vector<int>(pids.begin(), pids.end());
}

int Dataset::num_clothes() const {
    std::set<int> ids;
    for (const SampleMeta& m : meta) ids.insert(m.clothes_id);
    return static_cast<int>(ids.size());
}

bool Dataset::operator==(const Dataset& other) const {
    if (meta.size() != other.meta.size() || images.size() != other.images.size()) return false;
    for (size_t i = 0; i < meta.size(); ++i) {
        const SampleMeta& a = meta[i];
        const SampleMeta& b = other.meta[i];
        if (a.pid != b.pid || a.clothes_id != b.clothes_id || a.camera_id != b.camera_id ||
            a.split != b.split)
            return false;
    }
    return std::memcmp(images.data(), other.images.data(), images.size() * sizeof(float)) == 0;
}

namespace {

// Band layout (fractions of image height): identity cues sit on the head and
// leg bands, clothing cues on the torso band between them.
constexpr double kHeadEnd = 0.20;
constexpr double kTorsoEnd = 0.70;

enum StreamTag : uint64_t {
    kTagIdPattern = 1,
    kTagCloPattern = 2,
    kTagCameraTint = 3,
    kTagNoise = 4,
};

std::vector<float> banded_pattern(const SynthConfig& cfg, Rng rng, bool torso_band) {
    const int head_end = static_cast<int>(cfg.height * kHeadEnd);
    const int torso_end = static_cast<int>(cfg.height * kTorsoEnd);
    std::vector<float> img(static_cast<size_t>(cfg.height * cfg.width * 3), 0.0f);
    for (int y = 0; y < cfg.height; ++y) {
        const bool in_torso = y >= head_end && y < torso_end;
        for (int x = 0; x < cfg.width; ++x) {
            for (int c = 0; c < 3; ++c) {
                const float v = rng.gaussian(); // always drawn: band mask must not shift the stream
                if (in_torso == torso_band)
                    img[(static_cast<size_t>(y) * cfg.width + x) * 3 + c] = v;
            }
        }
    }
    return img;
}

} // namespace

Dataset generate(const SynthConfig& config) {
    config.validate();
    Dataset ds;
    ds.config = config;

    const Rng root(config.seed);
    std::vector<std::vector<float>> id_patterns(static_cast<size_t>(config.num_pids));
    for (int pid = 0; pid < config.num_pids; ++pid)
        id_patterns[static_cast<size_t>(pid)] =
            banded_pattern(config, root.fork(mix_seed(kTagIdPattern, static_cast<uint64_t>(pid))), false);

    const int num_clothes = config.num_pids * config.outfits_per_pid;
    std::vector<std::vector<float>> clo_patterns(static_cast<size_t>(num_clothes));
    for (int clo = 0; clo < num_clothes; ++clo)
        clo_patterns[static_cast<size_t>(clo)] =
            banded_pattern(config, root.fork(mix_seed(kTagCloPattern, static_cast<uint64_t>(clo))), true);

    std::vector<std::array<float, 3>> tints(static_cast<size_t>(config.cams));
    for (int cam = 0; cam < config.cams; ++cam) {
        Rng r = root.fork(mix_seed(kTagCameraTint, static_cast<uint64_t>(cam)));
        for (int c = 0; c < 3; ++c) tints[static_cast<size_t>(cam)][static_cast<size_t>(c)] = r.uniform(-0.1f, 0.1f);
    }

    // Enumerate (pid, outfit, cam) cells per preset; order fixes sample ids.
    struct Cell {
        int pid, outfit, cam;
    };
    std::vector<Cell> cells;
    for (int pid = 0; pid < config.num_pids; ++pid) {
        if (config.preset == CameraPreset::Ltcc) {
            for (int outfit = 0; outfit < config.outfits_per_pid; ++outfit)
                for (int cam = 0; cam < config.cams; ++cam) cells.push_back({pid, outfit, cam});
        } else {
            cells.push_back({pid, 0, 0});
            cells.push_back({pid, 0, 1});
            for (int outfit = 1; outfit < config.outfits_per_pid; ++outfit)
                cells.push_back({pid, outfit, 2});
        }
    }

    const int train_pids = (config.num_pids + 1) / 2;
    const int numel = config.height * config.width * 3;
    ds.images.reserve(cells.size() * static_cast<size_t>(config.images_per) * static_cast<size_t>(numel));

    int sample_index = 0;
    for (const Cell& cell : cells) {
        for (int k = 0; k < config.images_per; ++k, ++sample_index) {
            SampleMeta m;
            m.pid = cell.pid;
            m.clothes_id = cell.pid * config.outfits_per_pid + cell.outfit;
            m.camera_id = cell.cam;
            if (cell.pid < train_pids)
                m.split = Split::Train;
            else
                m.split = (k == 0) ? Split::Query : Split::Gallery;
            ds.meta.push_back(m);

            Rng noise = root.fork(mix_seed(kTagNoise, static_cast<uint64_t>(sample_index)));
            const std::vector<float>& bid = id_patterns[static_cast<size_t>(cell.pid)];
            const std::vector<float>& bclo = clo_patterns[static_cast<size_t>(m.clothes_id)];
            const std::array<float, 3>& tint = tints[static_cast<size_t>(cell.cam)];
            for (int j = 0; j < numel; ++j) {
                float v = config.id_signal * bid[static_cast<size_t>(j)] +
                          config.clo_signal * bclo[static_cast<size_t>(j)] + tint[static_cast<size_t>(j % 3)];
                if (config.noise_sigma > 0.0f) v += config.noise_sigma * noise.gaussian();
                ds.images.push_back(v);
            }
        }
    }
    return ds;
}

PkBatch pk_sample(const Dataset& dataset, int p, int k, Rng& rng) {
    if (p < 1 || k < 1) throw ContractError("pk_sample: P and K must be >= 1");
    std::vector<int> train_pids = dataset.pids_in_split(Split::Train);
    if (static_cast<int>(train_pids.size()) < p)
        throw ContractError("pk_sample: P=" + std::to_string(p) + " exceeds " +
                            std::to_string(train_pids.size()) + " train identities");

    std::map<int, std::vector<int>> by_pid;
    for (int i = 0; i < dataset.size(); ++i) {
        const SampleMeta& m = dataset.meta[static_cast<size_t>(i)];
        if (m.split == Split::Train) by_pid[m.pid].push_back(i);
    }

    // Partial Fisher-Yates over the identity list.
    for (int i = 0; i < p; ++i) {
        const int j = i + rng.uniform_int(static_cast<int>(train_pids.size()) - i);
        std::swap(train_pids[static_cast<size_t>(i)], train_pids[static_cast<size_t>(j)]);
    }

    PkBatch batch;
    batch.p = p;
    batch.k = k;
    batch.indices.reserve(static_cast<size_t>(p) * k);
    for (int i = 0; i < p; ++i) {
        std::vector<int>& pool = by_pid[train_pids[static_cast<size_t>(i)]];
        if (static_cast<int>(pool.size()) >= k) {
            for (int j = 0; j < k; ++j) {
                const int swap_with = j + rng.uniform_int(static_cast<int>(pool.size()) - j);
                std::swap(pool[static_cast<size_t>(j)], pool[static_cast<size_t>(swap_with)]);
                batch.indices.push_back(pool[static_cast<size_t>(j)]);
            }
        } else {
            for (int j = 0; j < k; ++j)
                batch.indices.push_back(pool[static_cast<size_t>(rng.uniform_int(static_cast<int>(pool.size())))]);
        }
    }
    return batch;
}

namespace {

ordered_json config_to_json(const SynthConfig& c) {
    ordered_json j;
    j["num_pids"] = c.num_pids;
    j["outfits_per_pid"] = c.outfits_per_pid;
    j["cams"] = c.cams;
    j["images_per"] = c.images_per;
    j["height"] = c.height;
    j["width"] = c.width;
    j["id_signal"] = c.id_signal;
    j["clo_signal"] = c.clo_signal;
    j["noise_sigma"] = c.noise_sigma;
    j["preset"] = to_string(c.preset);
    j["seed"] = c.seed;
    return j;
}

SynthConfig config_from_json(const nlohmann::json& j) {
    SynthConfig c;
    c.num_pids = j.at("num_pids").get<int>();
    c.outfits_per_pid = j.at("outfits_per_pid").get<int>();
    c.cams = j.at("cams").get<int>();
    c.images_per = j.at("images_per").get<int>();
    c.height = j.at("height").get<int>();
    c.width = j.at("width").get<int>();
    c.id_signal = j.at("id_signal").get<float>();
    c.clo_signal = j.at("clo_signal").get<float>();
    c.noise_sigma = j.at("noise_sigma").get<float>();
    c.preset = camera_preset_from_string(j.at("preset").get<std::string>());
    c.seed = j.at("seed").get<uint64_t>();
    return c;
}

void write_f32le(std::ostream& os, std::span<const float> data) {
    std::vector<unsigned char> buf(data.size() * 4);
    for (size_t i = 0; i < data.size(); ++i) {
        uint32_t bits;
        std::memcpy(&bits, &data[i], 4);
        buf[i * 4 + 0] = static_cast<unsigned char>(bits & 0xff);
        buf[i * 4 + 1] = static_cast<unsigned char>((bits >> 8) & 0xff);
        buf[i * 4 + 2] = static_cast<unsigned char>((bits >> 16) & 0xff);
        buf[i * 4 + 3] = static_cast<unsigned char>((bits >> 24) & 0xff);
    }
    os.write(reinterpret_cast<const char*>(buf.data()), static_cast<std::streamsize>(buf.size()));
}

std::vector<float> read_f32le(std::istream& is, size_t count) {
    std::vector<unsigned char> buf(count * 4);
    is.read(reinterpret_cast<char*>(buf.data()), static_cast<std::streamsize>(buf.size()));
    if (static_cast<size_t>(is.gcount()) != buf.size())
        throw IoError("blob length mismatch: expected " + std::to_string(buf.size()) + " bytes");
    std::vector<float> out(count);
    for (size_t i = 0; i < count; ++i) {
        const uint32_t bits = static_cast<uint32_t>(buf[i * 4]) |
                              (static_cast<uint32_t>(buf[i * 4 + 1]) << 8) |
                              (static_cast<uint32_t>(buf[i * 4 + 2]) << 16) |
                              (static_cast<uint32_t>(buf[i * 4 + 3]) << 24);
        std::memcpy(&out[i], &bits, 4);
    }
    return out;
}

constexpr int kDatasetVersion = 1;

} // namespace

void save_dataset(const Dataset& dataset, const std::filesystem::path& dir) {
    std::filesystem::create_directories(dir);
    ordered_json manifest;
    manifest["version"] = kDatasetVersion;
    manifest["config"] = config_to_json(dataset.config);
    manifest["num_samples"] = dataset.size();
    manifest["image_numel"] = dataset.image_numel();
    ordered_json samples = ordered_json::array();
    for (int i = 0; i < dataset.size(); ++i) {
        const SampleMeta& m = dataset.meta[static_cast<size_t>(i)];
        ordered_json s;
        s["pid"] = m.pid;
        s["clothes_id"] = m.clothes_id;
        s["camera_id"] = m.camera_id;
        s["split"] = to_string(m.split);
        s["offset"] = static_cast<int64_t>(i) * dataset.image_numel();
        samples.push_back(std::move(s));
    }
    manifest["samples"] = std::move(samples);

    std::ofstream mf(dir / "manifest.json");
    if (!mf) throw IoError("cannot write " + (dir / "manifest.json").string());
    mf << manifest.dump(2) << "\n";
    mf.close();

    std::ofstream bf(dir / "images.f32le", std::ios::binary);
    if (!bf) throw IoError("cannot write " + (dir / "images.f32le").string());
    write_f32le(bf, dataset.images);
}

Dataset load_dataset(const std::filesystem::path& dir) {
    std::ifstream mf(dir / "manifest.json");
    if (!mf) throw IoError("cannot open " + (dir / "manifest.json").string());
    nlohmann::json manifest;
    try {
        manifest = nlohmann::json::parse(mf);
    } catch (const nlohmann::json::exception& e) {
        throw IoError(std::string("malformed manifest: ") + e.what());
    }

    Dataset ds;
    try {
        const int version = manifest.at("version").get<int>();
        if (version != kDatasetVersion)
            throw IoError("version mismatch: manifest version " + std::to_string(version) +
                          ", expected " + std::to_string(kDatasetVersion));
        ds.config = config_from_json(manifest.at("config"));
        const int count = manifest.at("num_samples").get<int>();
        const int numel = manifest.at("image_numel").get<int>();
        if (numel != ds.config.height * ds.config.width * 3)
            throw IoError("malformed manifest: image_numel inconsistent with config");
        for (const auto& s : manifest.at("samples")) {
            SampleMeta m;
            m.pid = s.at("pid").get<int>();
            m.clothes_id = s.at("clothes_id").get<int>();
            m.camera_id = s.at("camera_id").get<int>();
            m.split = split_from_string(s.at("split").get<std::string>());
            const int64_t offset = s.at("offset").get<int64_t>();
            if (offset != static_cast<int64_t>(ds.meta.size()) * numel)
                throw IoError("malformed manifest: non-contiguous sample offset");
            ds.meta.push_back(m);
        }
        if (count != ds.size())
            throw IoError("malformed manifest: num_samples " + std::to_string(count) +
                          " does not match sample records " + std::to_string(ds.size()));
    } catch (const nlohmann::json::exception& e) {
        throw IoError(std::string("malformed manifest: ") + e.what());
    }

    std::ifstream bf(dir / "images.f32le", std::ios::binary);
    if (!bf) throw IoError("cannot open " + (dir / "images.f32le").string());
    ds.images = read_f32le(bf, static_cast<size_t>(ds.size()) * static_cast<size_t>(ds.image_numel()));
    bf.ignore(1);
    if (!bf.eof())
        throw IoError("blob length mismatch: trailing bytes in images.f32le");
    return ds;
}

} // namespace sci
