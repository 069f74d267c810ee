#include "sci/checkpoint.hpp"

#include <cstring>
#include <fstream>

namespace sci {

namespace {

constexpr char kMagic[8] = {'S', 'C', 'I', 'C', 'K', 'P', 'T', '\0'};
constexpr uint32_t kVersion = 1;

void write_u32(std::ostream& os, uint32_t v) {
    unsigned char b[4] = {static_cast<unsigned char>(v & 0xff),
                          static_cast<unsigned char>((v >> 8) & 0xff),
                          static_cast<unsigned char>((v >> 16) & 0xff),
                          static_cast<unsigned char>((v >> 24) & 0xff)};
    os.write(reinterpret_cast<const char*>(b), 4);
}

uint32_t read_u32(std::istream& is) {
    unsigned char b[4];
    is.read(reinterpret_cast<char*>(b), 4);
    if (is.gcount() != 4) throw IoError("checkpoint: truncated file");
    return static_cast<uint32_t>(b[0]) | (static_cast<uint32_t>(b[1]) << 8) |
           (static_cast<uint32_t>(b[2]) << 16) | (static_cast<uint32_t>(b[3]) << 24);
}

void write_string(std::ostream& os, const std::string& s) {
    write_u32(os, static_cast<uint32_t>(s.size()));
    os.write(s.data(), static_cast<std::streamsize>(s.size()));
}

std::string read_string(std::istream& is) {
    const uint32_t len = read_u32(is);
    std::string s(len, '\0');
    is.read(s.data(), static_cast<std::streamsize>(len));
    if (static_cast<uint32_t>(is.gcount()) != len) throw IoError("checkpoint: truncated string");
    return s;
}

void write_floats(std::ostream& os, std::span<const float> data) {
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

std::vector<float> read_floats(std::istream& is, size_t count) {
    std::vector<unsigned char> buf(count * 4);
    is.read(reinterpret_cast<char*>(buf.data()), static_cast<std::streamsize>(buf.size()));
    if (static_cast<size_t>(is.gcount()) != buf.size()) throw IoError("checkpoint: truncated tensor data");
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

} // namespace

const TensorRecord* CheckpointSection::find(const std::string& tensor_name) const {
    for (const TensorRecord& t : tensors)
        if (t.name == tensor_name) return &t;
    return nullptr;
}

const CheckpointSection* Checkpoint::find(const std::string& section_name) const {
    for (const CheckpointSection& s : sections)
        if (s.name == section_name) return &s;
    return nullptr;
}

CheckpointSection& Checkpoint::section(const std::string& section_name) {
    for (CheckpointSection& s : sections)
        if (s.name == section_name) return s;
    sections.push_back(CheckpointSection{section_name, {}});
    return sections.back();
}

void Checkpoint::add(const std::string& section_name, const std::string& tensor_name, const Tensor& t) {
    TensorRecord rec;
    rec.name = tensor_name;
    rec.shape = t.shape();
    rec.data.assign(t.data().begin(), t.data().end());
    section(section_name).tensors.push_back(std::move(rec));
}

void save_checkpoint(const Checkpoint& ckpt, const std::filesystem::path& path) {
    std::ofstream os(path, std::ios::binary);
    if (!os) throw IoError("checkpoint: cannot write " + path.string());
    os.write(kMagic, sizeof(kMagic));
    write_u32(os, ckpt.version);
    write_string(os, ckpt.config_json);
    write_u32(os, static_cast<uint32_t>(ckpt.sections.size()));
    for (const CheckpointSection& s : ckpt.sections) {
        write_string(os, s.name);
        write_u32(os, static_cast<uint32_t>(s.tensors.size()));
        for (const TensorRecord& t : s.tensors) {
            write_string(os, t.name);
            write_u32(os, static_cast<uint32_t>(t.shape.size()));
            for (int d : t.shape) write_u32(os, static_cast<uint32_t>(d));
            write_u32(os, static_cast<uint32_t>(t.data.size()));
            write_floats(os, t.data);
        }
    }
    if (!os) throw IoError("checkpoint: write failed for " + path.string());
}

Checkpoint load_checkpoint(const std::filesystem::path& path) {
    std::ifstream is(path, std::ios::binary);
    if (!is) throw IoError("checkpoint: cannot open " + path.string());
    char magic[8];
    is.read(magic, sizeof(magic));
    if (is.gcount() != sizeof(magic) || std::memcmp(magic, kMagic, sizeof(magic)) != 0)
        throw IoError("checkpoint: bad magic in " + path.string());
    Checkpoint ckpt;
    ckpt.version = read_u32(is);
    if (ckpt.version != kVersion)
        throw IoError("checkpoint: version mismatch: file has " + std::to_string(ckpt.version) +
                      ", expected " + std::to_string(kVersion));
    ckpt.config_json = read_string(is);
    const uint32_t num_sections = read_u32(is);
    for (uint32_t si = 0; si < num_sections; ++si) {
        CheckpointSection section;
        section.name = read_string(is);
        const uint32_t num_tensors = read_u32(is);
        for (uint32_t ti = 0; ti < num_tensors; ++ti) {
            TensorRecord rec;
            rec.name = read_string(is);
            const uint32_t ndim = read_u32(is);
            int64_t numel = 1;
            for (uint32_t d = 0; d < ndim; ++d) {
                rec.shape.push_back(static_cast<int>(read_u32(is)));
                numel *= rec.shape.back();
            }
            const uint32_t count = read_u32(is);
            if (static_cast<int64_t>(count) != numel)
                throw IoError("checkpoint: tensor '" + rec.name + "' length does not match shape");
            rec.data = read_floats(is, count);
            section.tensors.push_back(std::move(rec));
        }
        ckpt.sections.push_back(std::move(section));
    }
    return ckpt;
}

} // namespace sci
