#include "irfs/data.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <set>
#include <sstream>

#include "json.hpp"

#include "irfs/color.hpp"

namespace irfs::data {

namespace {

const char* kImageExts[] = {".png", ".jpg", ".jpeg"};

fs::path find_with_ext(const fs::path& dir, const std::string& id) {
    for (const char* ext : kImageExts) {
        fs::path p = dir / (id + ext);
        if (fs::exists(p)) return p;
    }
    return {};
}

Tensor binarize_mask(const Tensor& gray) {
    Tensor m({gray.shape(0), gray.shape(1)});
    for (int64_t i = 0; i < m.numel(); ++i) m[i] = gray[i] >= 0.5 ? 1.0 : 0.0;
    return m;
}

bool is_image(const fs::path& p) {
    const std::string ext = p.extension().string();
    return std::find_if(std::begin(kImageExts), std::end(kImageExts),
                        [&](const char* x) { return ext == x; }) != std::end(kImageExts);
}

// content key over the sorted directory listing (names and sizes)
uint64_t listing_hash(const fs::path& root, const DirNames& dirs) {
    std::vector<std::string> items;
    for (const std::string& sub : {dirs.visible, dirs.infrared, dirs.mask}) {
        const fs::path d = root / sub;
        if (!fs::is_directory(d)) continue;
        for (const auto& e : fs::directory_iterator(d))
            if (e.is_regular_file() && is_image(e.path()))
                items.push_back(sub + "/" + e.path().filename().string() + ":" +
                                std::to_string(fs::file_size(e.path())));
    }
    std::sort(items.begin(), items.end());
    uint64_t h = 0xcbf29ce484222325ull;
    for (const auto& s : items)
        for (unsigned char c : s) {
            h ^= c;
            h *= 0x100000001b3ull;
        }
    return h;
}

std::vector<ManifestEntry> scan_entries(const fs::path& root, const DirNames& dirs) {
    const fs::path vis_dir = root / dirs.visible;
    const fs::path ir_dir = root / dirs.infrared;
    const fs::path gt_dir = root / dirs.mask;
    if (!fs::is_directory(vis_dir) || !fs::is_directory(ir_dir))
        throw DataError("dataset root " + root.string() + " must contain " + dirs.visible + "/ and " +
                        dirs.infrared + "/ subdirectories");

    std::set<std::string> ids;
    for (const auto& e : fs::directory_iterator(vis_dir))
        if (e.is_regular_file() && is_image(e.path())) ids.insert(e.path().stem().string());
    if (ids.empty()) throw DataError("empty dataset: no images under " + vis_dir.string());

    std::vector<ManifestEntry> entries;
    for (const std::string& id : ids) { // std::set iterates sorted
        ManifestEntry entry;
        entry.id = id;
        entry.visible = find_with_ext(vis_dir, id);
        entry.infrared = find_with_ext(ir_dir, id);
        entry.mask = find_with_ext(gt_dir, id);
        entry.has_mask = !entry.mask.empty();
        entries.push_back(std::move(entry));
    }
    return entries;
}

std::vector<ManifestEntry> cached_scan(const fs::path& root, const DirNames& dirs,
                                       bool use_cache) {
    if (!use_cache) return scan_entries(root, dirs);
    const fs::path cache_path = root / ".manifest_cache.json";
    const uint64_t key = listing_hash(root, dirs);
    if (fs::exists(cache_path)) {
        try {
            std::ifstream in(cache_path);
            const auto j = nlohmann::json::parse(in);
            if (j.value("content_hash", uint64_t(0)) == key) {
                std::vector<ManifestEntry> entries;
                for (const auto& e : j.at("entries")) {
                    ManifestEntry entry;
                    entry.id = e.at("id").get<std::string>();
                    entry.visible = fs::path(e.at("visible").get<std::string>());
                    entry.infrared = fs::path(e.at("infrared").get<std::string>());
                    const std::string mask = e.value("mask", "");
                    entry.mask = mask.empty() ? fs::path() : fs::path(mask);
                    entry.has_mask = !mask.empty();
                    entries.push_back(std::move(entry));
                }
                return entries;
            }
        } catch (const std::exception&) {
            // unreadable cache: fall through to a fresh scan
        }
    }
    auto entries = scan_entries(root, dirs);
    nlohmann::json j;
    j["content_hash"] = key;
    auto list = nlohmann::json::array();
    for (const auto& e : entries)
        list.push_back({{"id", e.id},
                        {"visible", e.visible.string()},
                        {"infrared", e.infrared.string()},
                        {"mask", e.has_mask ? e.mask.string() : ""}});
    j["entries"] = list;
    std::ofstream out(cache_path);
    if (out) out << j.dump() << "\n";
    return entries;
}

} // namespace

DatasetManifest load_manifest(const fs::path& root, Split split, const DirNames& dirs,
                              bool use_cache) {
    DatasetManifest m;
    m.root = root;
    m.split = split;
    std::vector<std::string> broken;
    for (auto& entry : cached_scan(root, dirs, use_cache)) {
        if (entry.infrared.empty())
            broken.push_back(entry.id + " (missing " + dirs.infrared + ")");
        else if (split == Split::train && !entry.has_mask)
            broken.push_back(entry.id + " (missing " + dirs.mask + ")");
        else
            m.entries.push_back(std::move(entry));
    }
    if (!broken.empty()) {
        std::ostringstream os;
        os << "dataset " << root.string() << " has " << broken.size() << " broken entries:";
        for (const auto& b : broken) os << " " << b;
        throw DataError(os.str());
    }
    return m;
}

MultimodalSample load_sample(const ManifestEntry& entry) {
    MultimodalSample s;
    s.id = entry.id;
    Tensor vis = read_image(entry.visible);
    if (vis.shape(2) == 1) { // grayscale visible: replicate to 3 channels
        Tensor rgb({vis.shape(0), vis.shape(1), 3});
        for (int64_t p = 0; p < vis.shape(0) * vis.shape(1); ++p)
            for (int64_t c = 0; c < 3; ++c) rgb[p * 3 + c] = vis[p];
        vis = std::move(rgb);
    }
    s.visible = std::move(vis);
    Tensor ir = read_image(entry.infrared);
    s.infrared = ir.shape(2) == 3 ? rgb_to_gray(ir) : ir;
    if (entry.has_mask) {
        Tensor gm = read_image(entry.mask);
        if (gm.shape(2) == 3) gm = rgb_to_gray(gm);
        s.mask = binarize_mask(gm);
    }
    return s;
}

std::vector<MultimodalSample> make_batch(const DatasetManifest& manifest,
                                         const std::vector<size_t>& indices, bool train, int crop,
                                         Rng& rng) {
    std::vector<MultimodalSample> out;
    out.reserve(indices.size());
    for (size_t idx : indices) {
        if (idx >= manifest.entries.size()) throw DataError("make_batch: index out of range");
        MultimodalSample s = load_sample(manifest.entries[idx]);
        s.visible = resize_bilinear(s.visible, crop, crop);
        s.infrared = resize_bilinear(s.infrared, crop, crop);
        if (s.mask) s.mask = resize_nearest(*s.mask, crop, crop);
        if (train && rng.bernoulli(0.5)) { // one flip decision shared by all arrays
            s.visible = flip_horizontal(s.visible);
            s.infrared = flip_horizontal(s.infrared);
            if (s.mask) s.mask = flip_horizontal(*s.mask);
        }
        for (int64_t i = 0; i < s.visible.numel(); ++i)
            s.visible[i] = std::clamp(s.visible[i], 0.0, 1.0);
        for (int64_t i = 0; i < s.infrared.numel(); ++i)
            s.infrared[i] = std::clamp(s.infrared[i], 0.0, 1.0);
        validate_sample(s);
        out.push_back(std::move(s));
    }
    return out;
}

// ---- synthetic generator ----

namespace {

// two-octave value noise (bilinear interpolation of random grids)
Tensor value_noise(int size, Rng& rng) {
    Tensor out({int64_t(size), int64_t(size)});
    for (int grid : {6, 12}) {
        std::vector<double> g(size_t((grid + 1) * (grid + 1)));
        for (double& v : g) v = rng.uniform();
        const double amp = grid == 6 ? 0.7 : 0.3;
        for (int y = 0; y < size; ++y)
            for (int x = 0; x < size; ++x) {
                const double fy = double(y) / size * grid, fx = double(x) / size * grid;
                const int y0 = int(fy), x0 = int(fx);
                const double ty = fy - y0, tx = fx - x0;
                const double v =
                    (1 - ty) * ((1 - tx) * g[size_t(y0 * (grid + 1) + x0)] +
                                tx * g[size_t(y0 * (grid + 1) + x0 + 1)]) +
                    ty * ((1 - tx) * g[size_t((y0 + 1) * (grid + 1) + x0)] +
                          tx * g[size_t((y0 + 1) * (grid + 1) + x0 + 1)]);
                out.at(y, x) += amp * v;
            }
    }
    return out;
}

struct Shape {
    bool ellipse;
    double cy, cx, ry, rx;
    bool contains(double y, double x) const {
        const double dy = (y - cy) / ry, dx = (x - cx) / rx;
        return ellipse ? (dy * dy + dx * dx <= 1.0)
                       : (std::fabs(dy) <= 1.0 && std::fabs(dx) <= 1.0);
    }
};

} // namespace

std::vector<MultimodalSample> synthesize_samples(const SynthConfig& cfg) {
    if (cfg.n_samples < 1 || cfg.size < 16 || cfg.min_shapes < 1 ||
        cfg.max_shapes < cfg.min_shapes || cfg.noise_sigma < 0)
        throw ConfigError("synthetic generator: invalid config");
    Rng rng(cfg.seed);
    const int n = cfg.size;
    std::vector<MultimodalSample> out;
    out.reserve(size_t(cfg.n_samples));

    for (int si = 0; si < cfg.n_samples; ++si) {
        const int n_shapes = int(rng.uniform_int(cfg.min_shapes, cfg.max_shapes));
        std::vector<Shape> shapes;
        for (int k = 0; k < n_shapes; ++k) {
            Shape s;
            s.ellipse = rng.bernoulli(0.5);
            s.ry = rng.uniform(0.08, 0.22) * n; // per-shape area 2..15% of the image
            s.rx = rng.uniform(0.08, 0.22) * n;
            s.cy = rng.uniform(s.ry + 1, n - s.ry - 1);
            s.cx = rng.uniform(s.rx + 1, n - s.rx - 1);
            shapes.push_back(s);
        }

        Tensor mask({int64_t(n), int64_t(n)});
        for (int y = 0; y < n; ++y)
            for (int x = 0; x < n; ++x)
                for (const Shape& s : shapes)
                    if (s.contains(y + 0.5, x + 0.5)) {
                        mask.at(y, x) = 1.0;
                        break;
                    }

        // visible: textured background, low-contrast objects with a tint
        const Tensor noise = value_noise(n, rng);
        const double tint[3] = {rng.uniform(-0.06, 0.06), rng.uniform(-0.06, 0.06),
                                rng.uniform(-0.06, 0.06)};
        const double obj_delta = rng.uniform(-0.1, 0.1);
        Tensor vis({int64_t(n), int64_t(n), 3});
        for (int y = 0; y < n; ++y)
            for (int x = 0; x < n; ++x) {
                const double base = 0.25 + 0.5 * noise.at(y, x);
                const double lift = mask.at(y, x) > 0 ? obj_delta : 0.0;
                for (int c = 0; c < 3; ++c)
                    vis[(int64_t(y) * n + x) * 3 + c] =
                        std::clamp(base + tint[c] + lift, 0.0, 1.0);
            }

        // infrared: dark background, hot objects, additive noise
        const double bg_level = rng.uniform(0.08, 0.2);
        Tensor ir({int64_t(n), int64_t(n), 1});
        for (int y = 0; y < n; ++y)
            for (int x = 0; x < n; ++x) {
                double v = bg_level + (mask.at(y, x) > 0 ? cfg.ir_hotspot_gain : 0.0);
                v += rng.normal(0.0, cfg.noise_sigma);
                ir[int64_t(y) * n + x] = std::clamp(v, 0.0, 1.0);
            }

        MultimodalSample s;
        char buf[16];
        std::snprintf(buf, sizeof buf, "%04d", si);
        s.id = buf;
        s.visible = std::move(vis);
        s.infrared = std::move(ir);
        s.mask = std::move(mask);
        validate_sample(s);
        out.push_back(std::move(s));
    }
    return out;
}

DatasetManifest generate_synthetic(const fs::path& root, const SynthConfig& cfg, Split split) {
    const auto samples = synthesize_samples(cfg);
    for (const auto& s : samples) {
        write_png(root / "RGB" / (s.id + ".png"), s.visible);
        write_png(root / "T" / (s.id + ".png"), s.infrared);
        Tensor gm = s.mask->reshaped({s.mask->shape(0), s.mask->shape(1), 1});
        write_png(root / "GT" / (s.id + ".png"), gm);
    }
    return load_manifest(root, split);
}

} // namespace irfs::data
