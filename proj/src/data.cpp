#include "reidkit/data.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <iostream>
#include <regex>

#include "reidkit/rng.hpp"

namespace reidkit {

void IdentityDataset::rebuild_index() {
    identity_index.clear();
    for (std::size_t i = 0; i < identities.size(); ++i)
        if (identities[i] != kJunkIdentity) identity_index[identities[i]].push_back(i);
}

// ---- IDX -------------------------------------------------------------------

namespace {

constexpr std::uint32_t kIdxImagesMagic = 0x00000803;
constexpr std::uint32_t kIdxLabelsMagic = 0x00000801;

std::uint32_t read_be32(std::istream& is, const std::string& what) {
    unsigned char b[4];
    if (!is.read(reinterpret_cast<char*>(b), 4))
        throw DataError("idx: truncated file while reading " + what);
    return static_cast<std::uint32_t>(b[0]) << 24 | static_cast<std::uint32_t>(b[1]) << 16 |
           static_cast<std::uint32_t>(b[2]) << 8 | static_cast<std::uint32_t>(b[3]);
}

void write_be32(std::ostream& os, std::uint32_t v) {
    unsigned char b[4] = {static_cast<unsigned char>(v >> 24), static_cast<unsigned char>(v >> 16),
                          static_cast<unsigned char>(v >> 8), static_cast<unsigned char>(v)};
    os.write(reinterpret_cast<const char*>(b), 4);
}

std::string hex32(std::uint32_t v) {
    char buf[16];
    std::snprintf(buf, sizeof buf, "0x%08x", v);
    return buf;
}

}  // namespace

IdentityDataset load_idx(const std::filesystem::path& images_path,
                         const std::filesystem::path& labels_path) {
    std::ifstream img(images_path, std::ios::binary);
    if (!img) throw DataError("idx: cannot open image file " + images_path.string());
    std::ifstream lab(labels_path, std::ios::binary);
    if (!lab) throw DataError("idx: cannot open label file " + labels_path.string());

    const std::uint32_t img_magic = read_be32(img, "image magic");
    if (img_magic != kIdxImagesMagic)
        throw DataError("idx: wrong magic for images: got " + hex32(img_magic) + ", expected " +
                        hex32(kIdxImagesMagic));
    const std::uint32_t count = read_be32(img, "image count");
    const std::uint32_t rows = read_be32(img, "image rows");
    const std::uint32_t cols = read_be32(img, "image cols");

    const std::uint32_t lab_magic = read_be32(lab, "label magic");
    if (lab_magic != kIdxLabelsMagic)
        throw DataError("idx: wrong magic for labels: got " + hex32(lab_magic) + ", expected " +
                        hex32(kIdxLabelsMagic));
    const std::uint32_t lab_count = read_be32(lab, "label count");
    if (lab_count != count)
        throw DataError("idx: count mismatch: " + std::to_string(count) + " images vs " +
                        std::to_string(lab_count) + " labels");

    IdentityDataset ds;
    ds.channels = 1;
    ds.height = rows;
    ds.width = cols;
    const std::size_t npix = static_cast<std::size_t>(rows) * cols;
    std::vector<unsigned char> buf(npix);
    for (std::uint32_t i = 0; i < count; ++i) {
        if (!img.read(reinterpret_cast<char*>(buf.data()), static_cast<std::streamsize>(npix)))
            throw DataError("idx: truncated image data at sample " + std::to_string(i));
        std::vector<double> pixels(npix);
        for (std::size_t p = 0; p < npix; ++p) pixels[p] = buf[p] / 255.0;
        ds.images.push_back(std::move(pixels));
        const int label = lab.get();
        if (label == EOF) throw DataError("idx: truncated label data at sample " + std::to_string(i));
        ds.identities.push_back(label);
    }
    ds.rebuild_index();
    return ds;
}

void write_idx(const IdentityDataset& dataset, const std::filesystem::path& images_path,
               const std::filesystem::path& labels_path) {
    if (dataset.channels != 1)
        throw DataError("idx: writer supports single-channel images, got " +
                        std::to_string(dataset.channels) + " channels");
    for (int id : dataset.identities)
        if (id < 0 || id > 255)
            throw DataError("idx: identity " + std::to_string(id) + " does not fit a label byte");

    std::ofstream img(images_path, std::ios::binary);
    if (!img) throw DataError("idx: cannot open " + images_path.string() + " for writing");
    write_be32(img, kIdxImagesMagic);
    write_be32(img, static_cast<std::uint32_t>(dataset.size()));
    write_be32(img, static_cast<std::uint32_t>(dataset.height));
    write_be32(img, static_cast<std::uint32_t>(dataset.width));
    for (const auto& image : dataset.images)
        for (double v : image) {
            const long q = std::lround(v * 255.0);
            img.put(static_cast<char>(std::clamp(q, 0L, 255L)));
        }

    std::ofstream lab(labels_path, std::ios::binary);
    if (!lab) throw DataError("idx: cannot open " + labels_path.string() + " for writing");
    write_be32(lab, kIdxLabelsMagic);
    write_be32(lab, static_cast<std::uint32_t>(dataset.size()));
    for (int id : dataset.identities) lab.put(static_cast<char>(id));
    if (!img || !lab) throw DataError("idx: write failed");
}

// ---- PGM / PPM ---------------------------------------------------------------

namespace {

int next_pnm_token(std::istream& is) {
    // skips whitespace and '#' comments, returns the next integer
    while (true) {
        int c = is.peek();
        if (c == EOF) throw DataError("pnm: truncated header");
        if (std::isspace(c)) {
            is.get();
        } else if (c == '#') {
            std::string line;
            std::getline(is, line);
        } else {
            break;
        }
    }
    int value = 0;
    if (!(is >> value)) throw DataError("pnm: malformed header");
    return value;
}

}  // namespace

std::vector<double> read_pnm(const std::filesystem::path& path, std::size_t& channels,
                             std::size_t& height, std::size_t& width) {
    std::ifstream is(path, std::ios::binary);
    if (!is) throw DataError("pnm: cannot open " + path.string());
    char p = 0, kind = 0;
    is.get(p);
    is.get(kind);
    if (p != 'P' || (kind != '5' && kind != '6'))
        throw DataError("pnm: " + path.string() + " is not a binary PGM/PPM file");
    channels = kind == '5' ? 1 : 3;
    width = static_cast<std::size_t>(next_pnm_token(is));
    height = static_cast<std::size_t>(next_pnm_token(is));
    const int maxval = next_pnm_token(is);
    if (maxval <= 0 || maxval > 255)
        throw DataError("pnm: " + path.string() + " has unsupported maxval " +
                        std::to_string(maxval));
    is.get();  // single whitespace after maxval

    const std::size_t npix = height * width;
    std::vector<unsigned char> raw(npix * channels);
    if (!is.read(reinterpret_cast<char*>(raw.data()), static_cast<std::streamsize>(raw.size())))
        throw DataError("pnm: truncated pixel data in " + path.string());

    // interleaved on disk, channel-major in memory
    std::vector<double> image(npix * channels);
    for (std::size_t i = 0; i < npix; ++i)
        for (std::size_t c = 0; c < channels; ++c)
            image[c * npix + i] = raw[i * channels + c] / static_cast<double>(maxval);
    return image;
}

void write_pnm(const std::filesystem::path& path, const std::vector<double>& image,
               std::size_t channels, std::size_t height, std::size_t width) {
    if (channels != 1 && channels != 3)
        throw DataError("pnm: writer supports 1 or 3 channels, got " + std::to_string(channels));
    std::ofstream os(path, std::ios::binary);
    if (!os) throw DataError("pnm: cannot open " + path.string() + " for writing");
    os << (channels == 1 ? "P5" : "P6") << "\n" << width << " " << height << "\n255\n";
    const std::size_t npix = height * width;
    for (std::size_t i = 0; i < npix; ++i)
        for (std::size_t c = 0; c < channels; ++c) {
            const long q = std::lround(image[c * npix + i] * 255.0);
            os.put(static_cast<char>(std::clamp(q, 0L, 255L)));
        }
    if (!os) throw DataError("pnm: write failed for " + path.string());
}

// ---- Image folder --------------------------------------------------------------

IdentityDataset load_image_folder(const std::filesystem::path& root) {
    IdentityDataset ds;
    if (!std::filesystem::exists(root))
        throw DataError("folder: " + root.string() + " does not exist");

    std::vector<std::filesystem::path> files;
    for (const auto& entry : std::filesystem::directory_iterator(root))
        if (entry.is_regular_file()) files.push_back(entry.path());
    std::sort(files.begin(), files.end());

    static const std::regex name_pattern(R"(^(-?\d+)_c(\d+).*)");
    for (const auto& file : files) {
        const std::string name = file.filename().string();
        std::smatch match;
        if (!std::regex_match(name, match, name_pattern)) {
            std::cerr << "folder: skipping " << name << " (name does not match <pid>_c<camid>)\n";
            ++ds.skipped_files;
            continue;
        }
        std::string ext = file.extension().string();
        std::transform(ext.begin(), ext.end(), ext.begin(),
                       [](unsigned char c) { return std::tolower(c); });
        if (ext != ".pgm" && ext != ".ppm") {
            std::cerr << "folder: skipping " << name << " (only PGM/PPM are decoded natively)\n";
            ++ds.skipped_files;
            continue;
        }
        std::size_t c = 0, h = 0, w = 0;
        std::vector<double> image = read_pnm(file, c, h, w);
        if (ds.images.empty()) {
            ds.channels = c;
            ds.height = h;
            ds.width = w;
        } else if (c != ds.channels || h != ds.height || w != ds.width) {
            throw DataError("folder: " + name + " has a different shape than earlier images");
        }
        ds.images.push_back(std::move(image));
        ds.identities.push_back(std::stoi(match[1].str()));
        ds.cameras.push_back(std::stoi(match[2].str()));
    }
    ds.rebuild_index();
    return ds;
}

// ---- Synthetic blobs --------------------------------------------------------------

namespace {

inline double quantize_255(double v) {
    return std::clamp(std::lround(v * 255.0), 0L, 255L) / 255.0;
}

}  // namespace

IdentityDataset make_blobs(const SyntheticBlobConfig& cfg) {
    if (cfg.num_identities == 0 || cfg.samples_per_identity == 0)
        throw ConfigError("blobs: identities and samples per identity must be positive");
    IdentityDataset ds;
    ds.channels = cfg.channels;
    ds.height = cfg.height;
    ds.width = cfg.width;
    const std::size_t npix = cfg.channels * cfg.height * cfg.width;

    Rng rng(mix_seed(cfg.seed ^ 0xB10B5ull));
    for (std::size_t id = 0; id < cfg.num_identities; ++id) {
        std::vector<double> tmpl(npix);
        for (double& v : tmpl) v = quantize_255(rng.uniform());
        for (std::size_t s = 0; s < cfg.samples_per_identity; ++s) {
            std::vector<double> image(npix);
            for (std::size_t p = 0; p < npix; ++p)
                image[p] = quantize_255(tmpl[p] + cfg.noise_amplitude * rng.normal());
            ds.images.push_back(std::move(image));
            ds.identities.push_back(static_cast<int>(id));
        }
    }
    ds.rebuild_index();
    return ds;
}

// ---- Splits ------------------------------------------------------------------------

namespace {

IdentityDataset subset(const IdentityDataset& ds, const std::vector<std::size_t>& indices) {
    IdentityDataset out;
    out.channels = ds.channels;
    out.height = ds.height;
    out.width = ds.width;
    for (std::size_t i : indices) {
        out.images.push_back(ds.images[i]);
        out.identities.push_back(ds.identities[i]);
        if (ds.has_cameras()) out.cameras.push_back(ds.cameras[i]);
    }
    out.rebuild_index();
    return out;
}

}  // namespace

SplitResult split_query_gallery(const IdentityDataset& test_set, std::size_t queries_per_identity,
                                std::uint64_t seed) {
    Rng rng(mix_seed(seed ^ 0x5811Cull));
    std::vector<std::size_t> query_idx, gallery_idx;
    for (const auto& [id, samples] : test_set.identity_index) {
        std::vector<std::size_t> order = samples;
        rng.shuffle(order);
        // keep at least one gallery sample per identity
        const std::size_t nq = order.size() > 1
                                   ? std::min(queries_per_identity, order.size() - 1)
                                   : 0;
        for (std::size_t i = 0; i < order.size(); ++i)
            (i < nq ? query_idx : gallery_idx).push_back(order[i]);
    }
    // junk goes to the gallery as distractors
    for (std::size_t i = 0; i < test_set.size(); ++i)
        if (test_set.identities[i] == kJunkIdentity) gallery_idx.push_back(i);
    std::sort(query_idx.begin(), query_idx.end());
    std::sort(gallery_idx.begin(), gallery_idx.end());

    SplitResult result;
    result.query = subset(test_set, query_idx);
    result.gallery = subset(test_set, gallery_idx);
    if (result.query.size() == 0)
        throw DataError("split: no identity has enough samples to form a query set");
    return result;
}

SplitResult split(const IdentityDataset& dataset, const SplitPolicy& policy) {
    if (policy.train_fraction <= 0.0 || policy.train_fraction >= 1.0)
        throw ConfigError("split: train_fraction must lie in (0, 1)");
    std::vector<int> ids;
    for (const auto& [id, _] : dataset.identity_index) ids.push_back(id);

    SplitResult result;
    if (policy.kind == SplitPolicyKind::IdentityDisjoint) {
        if (ids.size() < 2)
            throw DataError("split: identity-disjoint policy needs at least 2 identities, got " +
                            std::to_string(ids.size()));
        Rng rng(mix_seed(policy.seed ^ 0xD15Cull));
        rng.shuffle(ids);
        std::size_t n_train = static_cast<std::size_t>(
            std::llround(policy.train_fraction * static_cast<double>(ids.size())));
        n_train = std::clamp<std::size_t>(n_train, 1, ids.size() - 1);

        std::vector<std::size_t> train_idx, test_idx;
        std::map<int, bool> in_train;
        for (std::size_t i = 0; i < ids.size(); ++i) in_train[ids[i]] = i < n_train;
        for (std::size_t i = 0; i < dataset.size(); ++i) {
            const int id = dataset.identities[i];
            if (id != kJunkIdentity && in_train.at(id))
                train_idx.push_back(i);
            else
                test_idx.push_back(i);
        }
        result.train = subset(dataset, train_idx);
        auto qg = split_query_gallery(subset(dataset, test_idx), policy.queries_per_identity,
                                      policy.seed);
        result.query = std::move(qg.query);
        result.gallery = std::move(qg.gallery);
    } else {
        if (ids.empty()) throw DataError("split: dataset has no labeled identities");
        Rng rng(mix_seed(policy.seed ^ 0xD15Cull));
        std::vector<std::size_t> train_idx, test_idx;
        for (int id : ids) {
            std::vector<std::size_t> order = dataset.identity_index.at(id);
            if (order.size() < 2)
                throw DataError("split: class-shared policy needs >= 2 samples per identity; identity " +
                                std::to_string(id) + " has " + std::to_string(order.size()));
            rng.shuffle(order);
            std::size_t n_train = static_cast<std::size_t>(
                std::llround(policy.train_fraction * static_cast<double>(order.size())));
            n_train = std::clamp<std::size_t>(n_train, 1, order.size() - 1);
            for (std::size_t i = 0; i < order.size(); ++i)
                (i < n_train ? train_idx : test_idx).push_back(order[i]);
        }
        for (std::size_t i = 0; i < dataset.size(); ++i)
            if (dataset.identities[i] == kJunkIdentity) test_idx.push_back(i);
        std::sort(train_idx.begin(), train_idx.end());
        std::sort(test_idx.begin(), test_idx.end());
        result.train = subset(dataset, train_idx);
        auto qg = split_query_gallery(subset(dataset, test_idx), policy.queries_per_identity,
                                      policy.seed);
        result.query = std::move(qg.query);
        result.gallery = std::move(qg.gallery);
    }
    if (result.train.size() == 0 || result.gallery.size() == 0)
        throw DataError("split: produced an empty train or gallery set");
    return result;
}

}  // namespace reidkit
