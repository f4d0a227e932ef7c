#include "pipeline/corpus.hpp"

#include <cmath>
#include <filesystem>
#include <fstream>
#include <set>

#include <json.hpp>

#include "core/error.hpp"

namespace synth::pipeline {

namespace fs = std::filesystem;

const std::vector<std::string>& shape_class_names() {
    static const std::vector<std::string> kNames = {
        "circle",   "ring",     "square",   "frame",     "diamond",  "triangle", "wedge",
        "pentagon", "hexagon",  "heptagon", "octagon",   "nonagon",  "decagon",  "star",
        "burst",    "spark",    "cross",    "plus",      "tee",      "ell",      "bar",
        "column",   "slash",    "stripes",  "grid",      "checker",  "dots",     "target",
        "crescent", "dome",     "bowl",     "hourglass", "bowtie",   "arrow",    "dart",
        "chevron",  "zigzag",   "heart",    "egg",       "oval",     "pill",     "keystone",
        "kite",     "stairs",   "comb",     "window",    "spiral",   "wave",     "ladder",
        "asterisk"};
    return kNames;
}

namespace {

constexpr double kPi = 3.14159265358979323846;

// Regular n-gon with circumradius 1; rot rotates the first vertex.
bool in_ngon(double u, double v, int n, double rot) {
    const double r = std::sqrt(u * u + v * v);
    if (r < 1e-9) return true;
    double theta = std::atan2(v, u) - rot;
    const double sector = 2.0 * kPi / n;
    theta = std::fmod(std::fmod(theta, sector) + sector, sector);
    return r * std::cos(theta - sector / 2.0) <= std::cos(kPi / n);
}

// n-pointed star: radius threshold interpolates outer->inner by phase.
bool in_star(double u, double v, int points, double inner) {
    const double r = std::sqrt(u * u + v * v);
    if (r < 1e-9) return true;
    double theta = std::atan2(v, u) + kPi / 2.0;
    const double sector = kPi / points;
    double phase = std::fmod(std::fmod(theta, 2.0 * sector) + 2.0 * sector, 2.0 * sector);
    phase = std::abs(phase - sector) / sector;  // 0 at spike tip, 1 between
    const double limit = 1.0 + (inner - 1.0) * phase;
    return r <= limit;
}

bool in_band(double x, double center, double half) { return std::abs(x - center) <= half; }

// u: right positive, v: down positive, both in [-1, 1].
bool shape_mask(int class_id, double u, double v) {
    const double r = std::sqrt(u * u + v * v);
    switch (class_id) {
        case 0: return r <= 1.0;                                   // circle
        case 1: return r <= 1.0 && r >= 0.55;                      // ring
        case 2: return std::max(std::abs(u), std::abs(v)) <= 0.9;  // square
        case 3: {                                                  // frame
            const double m = std::max(std::abs(u), std::abs(v));
            return m <= 0.9 && m >= 0.55;
        }
        case 4: return std::abs(u) + std::abs(v) <= 1.0;           // diamond
        case 5: return in_ngon(u, v, 3, -kPi / 2.0);               // triangle (up)
        case 6: return in_ngon(u, v, 3, kPi / 2.0);                // wedge (down)
        case 7: return in_ngon(u, v, 5, -kPi / 2.0);               // pentagon
        case 8: return in_ngon(u, v, 6, 0.0);                      // hexagon
        case 9: return in_ngon(u, v, 7, -kPi / 2.0);               // heptagon
        case 10: return in_ngon(u, v, 8, kPi / 8.0);               // octagon
        case 11: return in_ngon(u, v, 9, -kPi / 2.0);              // nonagon
        case 12: return in_ngon(u, v, 10, 0.0);                    // decagon
        case 13: return in_star(u, v, 5, 0.45);                    // star
        case 14: return in_star(u, v, 8, 0.4);                     // burst
        case 15: return in_star(u, v, 4, 0.22);                    // spark
        case 16: return (std::abs(u - v) <= 0.32 || std::abs(u + v) <= 0.32) && r <= 1.25;  // cross
        case 17: return std::abs(u) <= 0.32 || std::abs(v) <= 0.32;                         // plus
        case 18: return v <= -0.45 || std::abs(u) <= 0.3;          // tee
        case 19: return u <= -0.45 || v >= 0.45;                   // ell
        case 20: return std::abs(v) <= 0.35;                       // bar
        case 21: return std::abs(u) <= 0.35;                       // column
        case 22: return std::abs(u + v) <= 0.42;                   // slash
        case 23: {                                                 // stripes
            const int band = static_cast<int>(std::floor((v + 1.0) * 2.5));
            return band % 2 == 0;
        }
        case 24: {                                                 // grid
            const bool on_u = in_band(u, -0.6, 0.13) || in_band(u, 0.0, 0.13) || in_band(u, 0.6, 0.13);
            const bool on_v = in_band(v, -0.6, 0.13) || in_band(v, 0.0, 0.13) || in_band(v, 0.6, 0.13);
            return on_u || on_v;
        }
        case 25: {                                                 // checker
            const int cu = std::min(3, static_cast<int>(std::floor((u + 1.0) * 2.0)));
            const int cv = std::min(3, static_cast<int>(std::floor((v + 1.0) * 2.0)));
            return (cu + cv) % 2 == 0;
        }
        case 26: {                                                 // dots
            for (double cy : {-0.6, 0.0, 0.6})
                for (double cx : {-0.6, 0.0, 0.6})
                    if ((u - cx) * (u - cx) + (v - cy) * (v - cy) <= 0.25 * 0.25) return true;
            return false;
        }
        case 27: return r <= 1.0 && static_cast<int>(std::floor(r / 0.34)) % 2 == 0;  // target
        case 28: return r <= 1.0 && ((u - 0.45) * (u - 0.45) + v * v) > 0.8 * 0.8;    // crescent
        case 29: return r <= 1.0 && v <= 0.0;                      // dome (upper half)
        case 30: return r <= 1.0 && v >= 0.0;                      // bowl (lower half)
        case 31: return std::abs(u) <= std::abs(v) && std::abs(v) <= 0.95;  // hourglass
        case 32: return std::abs(v) <= std::abs(u) && std::abs(u) <= 0.95;  // bowtie
        case 33:                                                   // arrow (up)
            return (v <= 0.0 && std::abs(u) <= (v + 1.0) * 0.85) ||
                   (v > 0.0 && v <= 0.95 && std::abs(u) <= 0.25);
        case 34:                                                   // dart (down)
            return (v >= 0.0 && std::abs(u) <= (1.0 - v) * 0.85) ||
                   (v < 0.0 && v >= -0.95 && std::abs(u) <= 0.25);
        case 35: return std::abs(v - (std::abs(u) - 0.5)) <= 0.28;  // chevron
        case 36: {                                                  // zigzag
            const double saw = std::fmod((u + 1.0) * 1.5, 1.0);
            const double tri = 2.0 * std::abs(saw - 0.5) - 0.5;
            return std::abs(v - tri) <= 0.26;
        }
        case 37: {                                                  // heart
            const double x = u * 1.2;
            const double y = -v * 1.2 + 0.2;
            const double a = x * x + y * y - 1.0;
            return a * a * a - x * x * y * y * y <= 0.0;
        }
        case 38: return (u * u) / (0.55 * 0.55) + (v * v) / (0.95 * 0.95) <= 1.0;  // egg
        case 39: return (u * u) / (0.95 * 0.95) + (v * v) / (0.55 * 0.55) <= 1.0;  // oval
        case 40: {                                                  // pill
            const double cx = std::clamp(u, -0.5, 0.5);
            return (u - cx) * (u - cx) + v * v <= 0.42 * 0.42 || (std::abs(u) <= 0.5 && std::abs(v) <= 0.42);
        }
        case 41:                                                    // keystone
            return std::abs(v) <= 0.8 && std::abs(u) <= 0.35 + (v + 0.8) / 1.6 * 0.55;
        case 42: {                                                  // kite
            if (v <= 0.2) return std::abs(u) <= (v + 1.0) / 1.2 * 0.75 && v >= -1.0;
            return std::abs(u) <= (1.0 - v) / 0.8 * 0.75;
        }
        case 43: {                                                  // stairs
            const int s = std::min(2, static_cast<int>(std::floor((u + 1.0) * 1.5)));
            return v <= 0.9 && v >= 0.7 - 0.75 * s;
        }
        case 44: {                                                  // comb
            if (v >= 0.45 && v <= 0.85) return true;
            if (v < -0.85 || v > 0.45) return false;
            const int tooth = static_cast<int>(std::floor((u + 1.0) * 2.5));
            return tooth % 2 == 0;
        }
        case 45:                                                    // window
            return std::abs(u) >= 0.12 && std::abs(u) <= 0.85 && std::abs(v) >= 0.12 && std::abs(v) <= 0.85;
        case 46: {                                                  // spiral
            if (r > 1.0) return false;
            const double theta = std::atan2(v, u) + kPi;
            const double arm = std::fmod(r * 2.2 - theta / (2.0 * kPi) + 4.0, 1.0);
            return arm < 0.4;
        }
        case 47: return std::abs(v - 0.5 * std::sin(u * kPi * 1.5)) <= 0.27;  // wave
        case 48: {                                                  // ladder
            const bool rail = (in_band(u, -0.55, 0.12) || in_band(u, 0.55, 0.12)) && std::abs(v) <= 0.95;
            const bool rung = std::abs(u) <= 0.67 &&
                              (in_band(v, -0.6, 0.11) || in_band(v, 0.0, 0.11) || in_band(v, 0.6, 0.11));
            return rail || rung;
        }
        case 49: {                                                  // asterisk
            if (r > 1.0) return false;
            const double theta = std::atan2(v, u);
            for (double a : {0.0, kPi / 3.0, 2.0 * kPi / 3.0})
                if (std::abs(std::sin(theta - a)) * r <= 0.15) return true;
            return false;
        }
        default:
            throw ParameterError("render: unknown shape class id " + std::to_string(class_id));
    }
}

struct Rgb {
    float r, g, b;
};

Rgb color_rgb(int color_id) {
    static const Rgb kTable[] = {{0.85f, 0.10f, 0.10f}, {0.10f, 0.75f, 0.15f}, {0.15f, 0.25f, 0.90f},
                                 {0.95f, 0.85f, 0.10f}, {0.85f, 0.15f, 0.80f}, {0.10f, 0.80f, 0.85f},
                                 {0.95f, 0.55f, 0.10f}, {0.95f, 0.95f, 0.95f}};
    if (color_id < 0 || color_id >= 8) throw ParameterError("render: color id out of range");
    return kTable[color_id];
}

}  // namespace

vq::ToyImage render_scene(const Scene& scene, int image_size) {
    const auto& classes = shape_class_names();
    if (scene.class_id < 0 || scene.class_id >= static_cast<int>(classes.size()))
        throw ParameterError("render: class id out of range");
    if (scene.pos_id < 0 || scene.pos_id >= 9) throw ParameterError("render: position id out of range");

    vq::ToyImage img;
    img.h = img.w = image_size;
    img.rgb.assign(static_cast<size_t>(image_size) * image_size * 3, 0.0f);
    const Rgb bg = {0.08f, 0.08f, 0.10f};
    const Rgb fg = color_rgb(scene.color_id);

    // 3x3 anchor grid; shape radius keeps every position fully on-canvas.
    const double anchors[3] = {1.0 / 6.0, 0.5, 5.0 / 6.0};
    const double cx = anchors[scene.pos_id % 3] * image_size;
    const double cy = anchors[scene.pos_id / 3] * image_size;
    const double radius = 0.155 * image_size;

    for (int y = 0; y < image_size; ++y)
        for (int x = 0; x < image_size; ++x) {
            const double u = (x + 0.5 - cx) / radius;
            const double v = (y + 0.5 - cy) / radius;
            const bool inside =
                u >= -1.3 && u <= 1.3 && v >= -1.3 && v <= 1.3 && shape_mask(scene.class_id, u, v);
            const Rgb c = inside ? fg : bg;
            img.at(y, x, 0) = c.r;
            img.at(y, x, 1) = c.g;
            img.at(y, x, 2) = c.b;
        }
    return img;
}

std::string scene_caption(const Scene& scene, Rng& rng) {
    return capgen::SceneGrammar::caption_text(shape_class_names()[static_cast<size_t>(scene.class_id)],
                                              scene.color_id, scene.pos_id, rng);
}

Scene sample_scene(const CorpusConfig& cfg, Rng& rng) {
    if (cfg.classes < 1 || cfg.classes > static_cast<int>(shape_class_names().size()))
        throw ConfigError("corpus: class count out of range");
    Scene s;
    if (cfg.zipf) {
        // Zipf over class ranks; produces the skewed contrast corpus.
        double total = 0.0;
        for (int i = 1; i <= cfg.classes; ++i) total += 1.0 / std::pow(i, cfg.zipf_exponent);
        double u = rng.uniform() * total;
        s.class_id = cfg.classes - 1;
        for (int i = 1; i <= cfg.classes; ++i) {
            u -= 1.0 / std::pow(i, cfg.zipf_exponent);
            if (u < 0.0) {
                s.class_id = i - 1;
                break;
            }
        }
    } else {
        s.class_id = rng.randint(0, cfg.classes);
    }
    s.color_id = rng.randint(0, 8);
    s.pos_id = rng.randint(0, 9);
    return s;
}

void write_ppm(const std::string& path, const vq::ToyImage& img) {
    std::ofstream f(path, std::ios::binary | std::ios::trunc);
    if (!f) throw IoError("cannot open for write: " + path);
    f << "P6\n" << img.w << ' ' << img.h << "\n255\n";
    std::vector<unsigned char> bytes(img.rgb.size());
    for (size_t i = 0; i < img.rgb.size(); ++i) {
        const float v = std::clamp(img.rgb[i], 0.0f, 1.0f);
        bytes[i] = static_cast<unsigned char>(std::lround(v * 255.0f));
    }
    f.write(reinterpret_cast<const char*>(bytes.data()), static_cast<std::streamsize>(bytes.size()));
    if (!f) throw IoError("write failed: " + path);
}

vq::ToyImage read_ppm(const std::string& path) {
    std::ifstream f(path, std::ios::binary);
    if (!f) throw IoError("cannot open image: " + path);
    std::string magic;
    f >> magic;
    if (magic != "P6") throw DataError("unsupported image format (expected binary PPM): " + path);
    int w = 0, h = 0, maxval = 0;
    f >> w >> h >> maxval;
    f.get();  // single whitespace after header
    if (w <= 0 || h <= 0 || maxval != 255) throw DataError("unsupported PPM header: " + path);
    vq::ToyImage img;
    img.w = w;
    img.h = h;
    std::vector<unsigned char> bytes(static_cast<size_t>(w) * h * 3);
    f.read(reinterpret_cast<char*>(bytes.data()), static_cast<std::streamsize>(bytes.size()));
    if (!f) throw DataError("truncated PPM payload: " + path);
    img.rgb.resize(bytes.size());
    for (size_t i = 0; i < bytes.size(); ++i) img.rgb[i] = static_cast<float>(bytes[i]) / 255.0f;
    return img;
}

CorpusPaths make_corpus(const CorpusConfig& cfg, const std::string& out_dir) {
    fs::create_directories(fs::path(out_dir) / "images");
    CorpusPaths paths;
    paths.dir = out_dir;
    paths.train_jsonl = (fs::path(out_dir) / "train.jsonl").string();
    paths.heldout_jsonl = (fs::path(out_dir) / "heldout.jsonl").string();
    paths.classes_txt = (fs::path(out_dir) / "classes.txt").string();

    {
        std::ofstream cf(paths.classes_txt, std::ios::trunc);
        const auto& names = shape_class_names();
        for (int i = 0; i < cfg.classes; ++i) cf << names[static_cast<size_t>(i)] << '\n';
    }

    Rng scene_rng = Rng::derive(cfg.seed, 0x5c);
    Rng caption_rng = Rng::derive(cfg.seed, 0x5d);

    auto scene_key = [](const Scene& s) { return (s.class_id * 8 + s.color_id) * 9 + s.pos_id; };
    std::set<int> train_keys;

    auto emit = [&](std::ofstream& out, const Scene& scene, int index, const char* split) {
        const vq::ToyImage img = render_scene(scene, cfg.image_size);
        const std::string img_name = std::string("images/") + split + "-" + std::to_string(index) + ".ppm";
        write_ppm((fs::path(out_dir) / img_name).string(), img);
        nlohmann::json j = {{"caption", scene_caption(scene, caption_rng)},
                            {"image_path", img_name},
                            {"origin", "real"},
                            {"class", shape_class_names()[static_cast<size_t>(scene.class_id)]}};
        out << j.dump() << '\n';
    };

    std::ofstream train_f(paths.train_jsonl, std::ios::trunc);
    if (!train_f) throw IoError("cannot open for write: " + paths.train_jsonl);
    for (int i = 0; i < cfg.n_train; ++i) {
        const Scene s = sample_scene(cfg, scene_rng);
        train_keys.insert(scene_key(s));
        emit(train_f, s, i, "train");
    }

    // Held-out scenes never coincide with a training scene.
    std::ofstream held_f(paths.heldout_jsonl, std::ios::trunc);
    if (!held_f) throw IoError("cannot open for write: " + paths.heldout_jsonl);
    const int scene_space = cfg.classes * 8 * 9;
    if (cfg.n_heldout > scene_space - static_cast<int>(train_keys.size()))
        throw ConfigError("corpus: not enough unseen scenes for the held-out split");
    std::set<int> held_keys;
    int made = 0;
    while (made < cfg.n_heldout) {
        const Scene s = sample_scene(cfg, scene_rng);
        const int key = scene_key(s);
        if (train_keys.count(key) || held_keys.count(key)) continue;
        held_keys.insert(key);
        emit(held_f, s, made, "heldout");
        ++made;
    }
    return paths;
}

}  // namespace synth::pipeline
