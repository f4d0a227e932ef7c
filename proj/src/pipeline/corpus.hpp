#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "capgen/capgen.hpp"
#include "vq/vq.hpp"

namespace synth::pipeline {

// Procedurally rendered shapes corpus: class x color x position scenes
// with grounded template captions, the toy stand-in for web image-text
// data. Everything is a pure function of the seed.

struct Scene {
    int class_id = 0;
    int color_id = 0;
    int pos_id = 0;
};

struct CorpusConfig {
    int n_train = 400;
    int n_heldout = 200;
    int classes = 50;  // first `classes` entries of shape_class_names()
    uint64_t seed = 42;
    bool zipf = false;  // skew class frequencies (diversity contrast corpus)
    double zipf_exponent = 1.2;
    int image_size = 32;  // must equal vq side*patch when paired with a backbone
};

// 50 renderable shape classes, single caption-friendly words.
const std::vector<std::string>& shape_class_names();

vq::ToyImage render_scene(const Scene& scene, int image_size);

// Grounded caption: color and position always match the rendering.
std::string scene_caption(const Scene& scene, Rng& rng);

Scene sample_scene(const CorpusConfig& cfg, Rng& rng);

// Binary 8-bit PPM (P6); the corpus image format.
void write_ppm(const std::string& path, const vq::ToyImage& img);
vq::ToyImage read_ppm(const std::string& path);

struct CorpusPaths {
    std::string dir;
    std::string train_jsonl;
    std::string heldout_jsonl;
    std::string classes_txt;
};

// Renders train + held-out splits (held-out scenes never appear in
// train) and writes ingest-ready JSONL plus the class list.
CorpusPaths make_corpus(const CorpusConfig& cfg, const std::string& out_dir);

}  // namespace synth::pipeline
