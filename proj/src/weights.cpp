#include "vitderm/weights.hpp"

#include <cstring>
#include <fstream>
#include <map>
#include <sstream>

namespace vitderm {

namespace {

constexpr char kMagic[4] = {'V', 'I', 'T', 'W'};
constexpr uint8_t kVersion = 0x01;
constexpr uint8_t kDtypeF32 = 0;

void write_u32(std::ostream& out, uint32_t v) {
    unsigned char b[4] = {static_cast<unsigned char>(v & 0xff),
                          static_cast<unsigned char>((v >> 8) & 0xff),
                          static_cast<unsigned char>((v >> 16) & 0xff),
                          static_cast<unsigned char>((v >> 24) & 0xff)};
    out.write(reinterpret_cast<const char*>(b), 4);
}

uint32_t read_u32(std::istream& in, const std::string& path) {
    unsigned char b[4];
    in.read(reinterpret_cast<char*>(b), 4);
    if (in.gcount() != 4) throw IoError("truncated weight file: " + path);
    return static_cast<uint32_t>(b[0]) | (static_cast<uint32_t>(b[1]) << 8) |
           (static_cast<uint32_t>(b[2]) << 16) | (static_cast<uint32_t>(b[3]) << 24);
}

uint8_t read_u8(std::istream& in, const std::string& path) {
    char c;
    if (!in.get(c)) throw IoError("truncated weight file: " + path);
    return static_cast<uint8_t>(c);
}

struct FileTensor {
    std::vector<int> shape;
    std::vector<double> values;
};

} // namespace

void save_weights(const ViTModel& model, const std::string& path) {
    std::ofstream out(path, std::ios::binary);
    if (!out) throw IoError("cannot open for writing: " + path);
    out.write(kMagic, 4);
    out.put(static_cast<char>(kVersion));
    for (const std::string& name : model.param_order) {
        const Tensor& t = model.p(name);
        write_u32(out, static_cast<uint32_t>(name.size()));
        out.write(name.data(), static_cast<std::streamsize>(name.size()));
        out.put(static_cast<char>(kDtypeF32));
        out.put(static_cast<char>(t.rank()));
        for (int d : t.shape()) write_u32(out, static_cast<uint32_t>(d));
        std::vector<float> payload(t.size());
        for (size_t i = 0; i < payload.size(); ++i)
            payload[i] = static_cast<float>(t.data()[i]);
        out.write(reinterpret_cast<const char*>(payload.data()),
                  static_cast<std::streamsize>(payload.size() * sizeof(float)));
    }
    write_u32(out, 0);
    if (!out) throw IoError("write failed: " + path);
}

ViTModel load_weights(const std::string& path, const ViTConfig& config,
                      bool backbone_only, uint64_t head_seed) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw IoError("cannot open weight file: " + path);
    char magic[4];
    in.read(magic, 4);
    if (in.gcount() != 4 || std::memcmp(magic, kMagic, 4) != 0)
        throw IoError("bad magic in weight file: " + path);
    const uint8_t version = read_u8(in, path);
    if (version != kVersion)
        throw IoError("unsupported weight container version " +
                      std::to_string(version) + " in " + path);

    std::map<std::string, FileTensor> file_tensors;
    for (;;) {
        const uint32_t name_len = read_u32(in, path);
        if (name_len == 0) break;
        std::string name(name_len, '\0');
        in.read(name.data(), name_len);
        if (in.gcount() != static_cast<std::streamsize>(name_len))
            throw IoError("truncated weight file: " + path);
        const uint8_t dtype = read_u8(in, path);
        if (dtype != kDtypeF32)
            throw IoError("unsupported dtype code " + std::to_string(dtype) +
                          " for tensor '" + name + "' in " + path);
        const uint8_t rank = read_u8(in, path);
        FileTensor ft;
        size_t count = 1;
        for (int i = 0; i < rank; ++i) {
            const uint32_t dim = read_u32(in, path);
            if (dim == 0) throw IoError("zero dimension for tensor '" + name + "'");
            ft.shape.push_back(static_cast<int>(dim));
            count *= dim;
        }
        std::vector<float> payload(count);
        in.read(reinterpret_cast<char*>(payload.data()),
                static_cast<std::streamsize>(count * sizeof(float)));
        if (static_cast<size_t>(in.gcount()) != count * sizeof(float))
            throw IoError("truncated payload for tensor '" + name + "' in " + path);
        ft.values.assign(payload.begin(), payload.end());
        if (!file_tensors.emplace(name, std::move(ft)).second)
            throw IoError("duplicate tensor name '" + name + "' in " + path);
    }

    ViTModel model = init_weights(config, head_seed);
    for (const std::string& name : model.param_order) {
        auto it = file_tensors.find(name);
        if (it == file_tensors.end()) {
            if (backbone_only && name.rfind("head.", 0) == 0) continue;
            throw IoError("weight file " + path + " is missing tensor '" + name + "'");
        }
        Tensor& t = model.p(name);
        if (it->second.shape != t.shape())
            throw DimensionError("tensor '" + name + "': file has " +
                                 shape_string(it->second.shape) + ", expected " +
                                 shape_string(t.shape()));
        t.data() = std::move(it->second.values);
        file_tensors.erase(it);
    }
    if (!file_tensors.empty()) {
        std::ostringstream extra;
        for (const auto& [name, ft] : file_tensors) {
            if (extra.tellp() > 0) extra << ", ";
            extra << '\'' << name << '\'';
        }
        throw IoError("weight file " + path + " carries unknown tensors: " + extra.str());
    }
    return model;
}

} // namespace vitderm
