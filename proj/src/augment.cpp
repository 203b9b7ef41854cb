#include "vitderm/augment.hpp"

#include <algorithm>
#include <array>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <numbers>
#include <sstream>

namespace vitderm {

AugmentParams sample_augment_params(std::mt19937_64& rng) {
    std::uniform_real_distribution<double> rot(-180.0, 180.0);
    std::uniform_real_distribution<double> shift(-0.1, 0.1);
    std::uniform_real_distribution<double> shear(-10.0, 10.0);
    std::uniform_real_distribution<double> bright(0.8, 1.2);
    std::uniform_real_distribution<double> zoom(0.9, 1.1);
    AugmentParams p;
    p.rotation_deg = rot(rng);
    p.shift_x = shift(rng);
    p.shift_y = shift(rng);
    p.shear_deg = shear(rng);
    p.brightness = bright(rng);
    p.zoom = zoom(rng);
    return p;
}

std::string serialize_params(const AugmentParams& p) {
    char buf[256];
    std::snprintf(buf, sizeof(buf),
                  "rot=%.17g;sx=%.17g;sy=%.17g;shear=%.17g;bright=%.17g;zoom=%.17g",
                  p.rotation_deg, p.shift_x, p.shift_y, p.shear_deg, p.brightness, p.zoom);
    return buf;
}

AugmentParams parse_params(const std::string& s) {
    AugmentParams p;
    std::stringstream ss(s);
    std::string item;
    while (std::getline(ss, item, ';')) {
        const size_t eq = item.find('=');
        if (eq == std::string::npos)
            throw DataError("malformed augment params: '" + s + "'");
        const std::string key = item.substr(0, eq);
        const double value = std::stod(item.substr(eq + 1));
        if (key == "rot") p.rotation_deg = value;
        else if (key == "sx") p.shift_x = value;
        else if (key == "sy") p.shift_y = value;
        else if (key == "shear") p.shear_deg = value;
        else if (key == "bright") p.brightness = value;
        else if (key == "zoom") p.zoom = value;
        else throw DataError("unknown augment param key: '" + key + "'");
    }
    return p;
}

Image transform_image(const Image& image, const AugmentParams& params) {
    const int h = image.height, w = image.width;
    const double deg2rad = std::numbers::pi / 180.0;
    const double theta = params.rotation_deg * deg2rad;
    const double phi = params.shear_deg * deg2rad;
    const double z = params.zoom;

    // forward map: p_out = A * (p_in + s - c) + c, with A = R * Sh * Z
    const double ct = std::cos(theta), st = std::sin(theta);
    const double tp = std::tan(phi);
    // R * Sh = [[ct, ct*tp - st], [st, st*tp + ct]]; then scale by z
    const double a00 = ct * z, a01 = (ct * tp - st) * z;
    const double a10 = st * z, a11 = (st * tp + ct) * z;
    const double det = a00 * a11 - a01 * a10;
    const double i00 = a11 / det, i01 = -a01 / det;
    const double i10 = -a10 / det, i11 = a00 / det;

    const double cx = (w - 1) / 2.0, cy = (h - 1) / 2.0;
    const double sx = params.shift_x * w, sy = params.shift_y * h;

    Image out = Image::zeros(h, w);
    for (int y = 0; y < h; ++y) {
        for (int x = 0; x < w; ++x) {
            const double dx = x - cx, dy = y - cy;
            // invert: p_in = A^-1 (p_out - c) + c - s
            double u = i00 * dx + i01 * dy + cx - sx;
            double v = i10 * dx + i11 * dy + cy - sy;
            // nearest fill: clamp the sample point into the image
            u = std::clamp(u, 0.0, static_cast<double>(w - 1));
            v = std::clamp(v, 0.0, static_cast<double>(h - 1));
            const int x0 = static_cast<int>(u), y0 = static_cast<int>(v);
            const int x1 = std::min(x0 + 1, w - 1), y1 = std::min(y0 + 1, h - 1);
            const double fu = u - x0, fv = v - y0;
            for (int c = 0; c < 3; ++c) {
                const double top = image.at(y0, x0, c) * (1 - fu) + image.at(y0, x1, c) * fu;
                const double bot = image.at(y1, x0, c) * (1 - fu) + image.at(y1, x1, c) * fu;
                const double val = (top * (1 - fv) + bot * fv) * params.brightness;
                out.at(y, x, c) = std::clamp(val, 0.0, 1.0);
            }
        }
    }
    return out;
}

namespace {

std::mt19937_64 stream_rng(uint64_t seed, int class_id_, int64_t index) {
    std::seed_seq seq{static_cast<uint32_t>(seed), static_cast<uint32_t>(seed >> 32),
                      static_cast<uint32_t>(class_id_),
                      static_cast<uint32_t>(index), static_cast<uint32_t>(index >> 32)};
    return std::mt19937_64(seq);
}

} // namespace

std::vector<ManifestEntry> to_entries(const std::vector<LesionRecord>& records,
                                      const std::string& split_name) {
    std::vector<ManifestEntry> entries;
    entries.reserve(records.size());
    for (const auto& rec : records) {
        ManifestEntry e;
        e.split = split_name;
        e.image_id = rec.image_id;
        e.dx = rec.dx;
        entries.push_back(std::move(e));
    }
    return entries;
}

std::vector<ManifestEntry> augment_class_balance(
    const std::vector<LesionRecord>& train_records, int64_t target, uint64_t seed) {
    std::vector<ManifestEntry> entries = to_entries(train_records, "train");

    std::array<std::vector<const LesionRecord*>, kNumClasses> by_class;
    for (const auto& rec : train_records) by_class[class_id(rec.dx)].push_back(&rec);
    const int nv = class_id("nv");

    for (int c = 0; c < kNumClasses; ++c) {
        if (c == nv) continue;  // the dominant class is never upsampled
        const auto& originals = by_class[c];
        const int64_t have = static_cast<int64_t>(originals.size());
        if (have >= target) continue;
        if (originals.empty())
            throw DataError("cannot balance class '" + class_labels()[c] +
                            "': no training samples");
        for (int64_t k = 0; k < target - have; ++k) {
            std::mt19937_64 rng = stream_rng(seed, c, k);
            std::uniform_int_distribution<size_t> pick(0, originals.size() - 1);
            const LesionRecord* src = originals[pick(rng)];
            ManifestEntry e;
            e.split = "train";
            e.image_id = src->image_id + "_aug" + std::to_string(k);
            e.dx = src->dx;
            e.synthetic = true;
            e.source_image_id = src->image_id;
            e.params = sample_augment_params(rng);
            entries.push_back(std::move(e));
        }
    }
    return entries;
}

void write_manifest(const std::string& path, const std::vector<ManifestEntry>& entries) {
    std::ofstream out(path);
    if (!out) throw IoError("cannot write manifest: " + path);
    out << "# split\timage_id\tdx\tsynthetic\tsource_image_id\tparams\n";
    for (const auto& e : entries) {
        out << e.split << '\t' << e.image_id << '\t' << e.dx << '\t'
            << (e.synthetic ? 1 : 0) << '\t'
            << (e.synthetic ? e.source_image_id : std::string("-")) << '\t'
            << (e.synthetic ? serialize_params(e.params) : std::string("-")) << '\n';
    }
    if (!out) throw IoError("write failed: " + path);
}

std::vector<ManifestEntry> read_manifest(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw IoError("cannot open manifest: " + path);
    std::vector<ManifestEntry> entries;
    std::string line;
    int line_no = 0;
    while (std::getline(in, line)) {
        ++line_no;
        if (line.empty() || line[0] == '#') continue;
        std::stringstream ss(line);
        std::string split_name, image_id, dx, synthetic, source, params;
        if (!std::getline(ss, split_name, '\t') || !std::getline(ss, image_id, '\t') ||
            !std::getline(ss, dx, '\t') || !std::getline(ss, synthetic, '\t') ||
            !std::getline(ss, source, '\t') || !std::getline(ss, params, '\t'))
            throw DataError("manifest line " + std::to_string(line_no) + ": expected 6 fields");
        ManifestEntry e;
        e.split = split_name;
        e.image_id = image_id;
        e.dx = dx;
        e.synthetic = synthetic == "1";
        if (e.synthetic) {
            e.source_image_id = source;
            e.params = parse_params(params);
        }
        entries.push_back(std::move(e));
    }
    return entries;
}

} // namespace vitderm
