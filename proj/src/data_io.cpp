#include "omf/data_io.hpp"

#include <algorithm>
#include <bit>
#include <cctype>
#include <charconv>
#include <cstdio>
#include <cstring>
#include <fstream>
#include <limits>
#include <numeric>
#include <random>
#include <sstream>

namespace omf {

namespace {

constexpr std::string_view kMagic = "OMFMAT01";
constexpr std::uint64_t kMaxEntries = std::uint64_t(1) << 32;

void put_u64(std::string& out, std::uint64_t v) {
    for (int i = 0; i < 8; ++i) out.push_back(static_cast<char>((v >> (8 * i)) & 0xffu));
}

std::uint64_t get_u64(std::string_view bytes, std::size_t offset) {
    std::uint64_t v = 0;
    for (int i = 7; i >= 0; --i) v = (v << 8) | static_cast<unsigned char>(bytes[offset + static_cast<std::size_t>(i)]);
    return v;
}

MatrixXd decode_binary(std::string_view bytes) {
    if (bytes.size() < kMagic.size() + 16) throw DataError("matrix file: truncated header");
    const std::uint64_t rows = get_u64(bytes, 8);
    const std::uint64_t cols = get_u64(bytes, 16);
    if (rows > kMaxEntries || cols > kMaxEntries || (rows && cols > kMaxEntries / rows))
        throw DataError("matrix file: dimensions too large");
    const std::uint64_t expected = rows * cols * 8;
    const std::uint64_t payload = bytes.size() - 24;
    if (payload < expected) throw DataError("matrix file: truncated payload");
    if (payload > expected) throw DataError("matrix file: trailing bytes after payload");
    MatrixXd M(static_cast<Index>(rows), static_cast<Index>(cols));
    std::size_t offset = 24;
    for (Index r = 0; r < M.rows(); ++r)
        for (Index c = 0; c < M.cols(); ++c, offset += 8) M(r, c) = std::bit_cast<double>(get_u64(bytes, offset));
    require_finite(M, "matrix file");
    return M;
}

class Tokenizer {
   public:
    explicit Tokenizer(std::string_view s) : s_(s) {}

    bool next(std::string_view& token) {
        while (pos_ < s_.size() && std::isspace(static_cast<unsigned char>(s_[pos_]))) ++pos_;
        if (pos_ >= s_.size()) return false;
        const std::size_t start = pos_;
        while (pos_ < s_.size() && !std::isspace(static_cast<unsigned char>(s_[pos_]))) ++pos_;
        token = s_.substr(start, pos_ - start);
        return true;
    }

   private:
    std::string_view s_;
    std::size_t pos_ = 0;
};

std::uint64_t parse_dim(std::string_view token) {
    std::uint64_t v = 0;
    const auto [ptr, ec] = std::from_chars(token.data(), token.data() + token.size(), v);
    if (ec != std::errc() || ptr != token.data() + token.size()) throw DataError("matrix file: malformed header");
    return v;
}

double parse_value(std::string_view token) {
    // strtod needs a terminated buffer; tokens are short.
    if (token.size() > 64) throw DataError("matrix file: malformed value");
    char buf[72];
    std::memcpy(buf, token.data(), token.size());
    buf[token.size()] = '\0';
    char* end = nullptr;
    const double v = std::strtod(buf, &end);
    if (end != buf + token.size()) throw DataError("matrix file: malformed value '" + std::string(token) + "'");
    if (!std::isfinite(v)) throw DataError("matrix file: non-finite value");
    return v;
}

MatrixXd decode_text(std::string_view bytes) {
    Tokenizer tok(bytes);
    std::string_view t;
    if (!tok.next(t)) throw DataError("matrix file: empty input, missing header");
    const std::uint64_t rows = parse_dim(t);
    if (!tok.next(t)) throw DataError("matrix file: malformed header");
    const std::uint64_t cols = parse_dim(t);
    // every value needs at least two bytes, which bounds the allocation
    if (rows > kMaxEntries || cols > kMaxEntries || (rows && cols > bytes.size() / rows))
        throw DataError("matrix file: truncated payload");
    MatrixXd M(static_cast<Index>(rows), static_cast<Index>(cols));
    for (Index r = 0; r < M.rows(); ++r)
        for (Index c = 0; c < M.cols(); ++c) {
            if (!tok.next(t)) throw DataError("matrix file: truncated payload");
            M(r, c) = parse_value(t);
        }
    if (tok.next(t)) throw DataError("matrix file: trailing data after payload");
    return M;
}

}  // namespace

std::string encode_matrix(const MatrixXd& M, MatrixEncoding encoding) {
    require_finite(M, "matrix");
    std::string out;
    if (encoding == MatrixEncoding::binary) {
        out.reserve(24 + static_cast<std::size_t>(M.size()) * 8);
        out.append(kMagic);
        put_u64(out, static_cast<std::uint64_t>(M.rows()));
        put_u64(out, static_cast<std::uint64_t>(M.cols()));
        for (Index r = 0; r < M.rows(); ++r)
            for (Index c = 0; c < M.cols(); ++c) put_u64(out, std::bit_cast<std::uint64_t>(M(r, c)));
        return out;
    }
    out = std::to_string(M.rows()) + " " + std::to_string(M.cols()) + "\n";
    char buf[32];
    for (Index r = 0; r < M.rows(); ++r) {
        for (Index c = 0; c < M.cols(); ++c) {
            std::snprintf(buf, sizeof buf, "%.17g", M(r, c));
            if (c) out.push_back(' ');
            out.append(buf);
        }
        out.push_back('\n');
    }
    return out;
}

MatrixXd decode_matrix(std::string_view bytes) {
    if (bytes.size() >= kMagic.size() && bytes.substr(0, kMagic.size()) == kMagic) return decode_binary(bytes);
    return decode_text(bytes);
}

std::string read_file(const std::filesystem::path& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw DataError("cannot open '" + path.string() + "' for reading");
    std::ostringstream ss;
    ss << in.rdbuf();
    return ss.str();
}

void write_file(const std::filesystem::path& path, std::string_view bytes) {
    std::ofstream out(path, std::ios::binary | std::ios::trunc);
    if (!out) throw DataError("cannot open '" + path.string() + "' for writing");
    out.write(bytes.data(), static_cast<std::streamsize>(bytes.size()));
    if (!out) throw DataError("write to '" + path.string() + "' failed");
}

void save_matrix(const MatrixXd& M, const std::filesystem::path& path, MatrixEncoding encoding) {
    write_file(path, encode_matrix(M, encoding));
}

MatrixXd load_matrix(const std::filesystem::path& path) {
    try {
        return decode_matrix(read_file(path));
    } catch (const DataError& e) {
        throw DataError(path.string() + ": " + e.what());
    }
}

// --- rasters ---------------------------------------------------------------

namespace {

class PnmHeader {
   public:
    explicit PnmHeader(std::string_view s) : s_(s) {}

    std::uint64_t number() {
        skip();
        const std::size_t start = pos_;
        std::uint64_t v = 0;
        while (pos_ < s_.size() && std::isdigit(static_cast<unsigned char>(s_[pos_]))) {
            v = v * 10 + static_cast<std::uint64_t>(s_[pos_] - '0');
            if (v > (std::uint64_t(1) << 31)) throw DataError("raster header: value out of range");
            ++pos_;
        }
        if (pos_ == start) throw DataError("raster header: expected a number");
        return v;
    }

    std::size_t raster_offset() {
        if (pos_ >= s_.size() || !std::isspace(static_cast<unsigned char>(s_[pos_])))
            throw DataError("raster header: missing separator before raster");
        return pos_ + 1;
    }

   private:
    void skip() {
        while (pos_ < s_.size()) {
            if (std::isspace(static_cast<unsigned char>(s_[pos_]))) {
                ++pos_;
            } else if (s_[pos_] == '#') {
                while (pos_ < s_.size() && s_[pos_] != '\n') ++pos_;
            } else {
                break;
            }
        }
    }

    std::string_view s_;
    std::size_t pos_ = 2;
};

}  // namespace

Image decode_pnm(std::string_view bytes) {
    if (bytes.size() < 2 || bytes[0] != 'P' || (bytes[1] != '5' && bytes[1] != '6'))
        throw DataError("unsupported raster format (expected binary P5 or P6)");
    Image img;
    img.channels = bytes[1] == '5' ? 1 : 3;
    PnmHeader header(bytes);
    img.width = static_cast<Index>(header.number());
    img.height = static_cast<Index>(header.number());
    const std::uint64_t maxval = header.number();
    if (img.width < 1 || img.height < 1) throw DataError("raster header: empty image");
    if (maxval < 1 || maxval > 65535) throw DataError("raster header: maxval must be in [1, 65535]");
    const std::size_t offset = header.raster_offset();
    const std::size_t bytes_per_sample = maxval < 256 ? 1 : 2;
    const std::uint64_t count = static_cast<std::uint64_t>(img.width) * static_cast<std::uint64_t>(img.height) *
                                static_cast<std::uint64_t>(img.channels);
    if (bytes.size() < offset || (bytes.size() - offset) / bytes_per_sample < count)
        throw DataError("raster: truncated pixel data");
    img.samples.resize(static_cast<std::size_t>(count));
    for (std::size_t i = 0; i < img.samples.size(); ++i) {
        const std::size_t p = offset + i * bytes_per_sample;
        unsigned v = static_cast<unsigned char>(bytes[p]);
        if (bytes_per_sample == 2) v = (v << 8) | static_cast<unsigned char>(bytes[p + 1]);
        img.samples[i] = static_cast<double>(v) / static_cast<double>(maxval);
    }
    return img;
}

Image load_pnm(const std::filesystem::path& path) {
    try {
        return decode_pnm(read_file(path));
    } catch (const DataError& e) {
        throw DataError(path.string() + ": " + e.what());
    }
}

std::string encode_pnm(const Image& image) {
    if (image.channels != 1 && image.channels != 3) throw InvalidArgument("raster must have 1 or 3 channels");
    std::string out = (image.channels == 1 ? "P5\n" : "P6\n") + std::to_string(image.width) + " " +
                      std::to_string(image.height) + "\n255\n";
    for (double s : image.samples)
        out.push_back(static_cast<char>(static_cast<unsigned char>(std::lround(std::clamp(s, 0.0, 1.0) * 255.0))));
    return out;
}

void PatchSpec::validate() const {
    if (edge < 1) throw InvalidArgument("patch edge must be at least 1");
    if (stride < 1) throw InvalidArgument("patch stride must be at least 1");
    if (channels != 1 && channels != 3) throw InvalidArgument("patch channels must be 1 or 3");
}

MatrixXd extract_patches(const Image& image, const PatchSpec& spec, Index max_count, std::uint64_t rng_seed) {
    spec.validate();
    if (image.width < spec.edge || image.height < spec.edge)
        throw DataError("image " + std::to_string(image.width) + "x" + std::to_string(image.height) +
                        " is smaller than the patch edge " + std::to_string(spec.edge));
    if (spec.channels == 3 && image.channels != 3) throw DataError("color patches need a color (P6) image");

    std::vector<std::pair<Index, Index>> positions;
    for (Index y = 0; y + spec.edge <= image.height; y += spec.stride)
        for (Index x = 0; x + spec.edge <= image.width; x += spec.stride) positions.emplace_back(y, x);
    Rng rng(rng_seed);
    std::shuffle(positions.begin(), positions.end(), rng);
    const Index n = max_count > 0 ? std::min<Index>(max_count, static_cast<Index>(positions.size()))
                                  : static_cast<Index>(positions.size());

    const Index area = spec.edge * spec.edge;
    MatrixXd X(spec.dimension(), n);
    for (Index i = 0; i < n; ++i) {
        const auto [y0, x0] = positions[static_cast<std::size_t>(i)];
        for (Index c = 0; c < spec.channels; ++c)
            for (Index dy = 0; dy < spec.edge; ++dy)
                for (Index dx = 0; dx < spec.edge; ++dx) {
                    double v;
                    if (spec.channels == image.channels) {
                        v = image.at(c, y0 + dy, x0 + dx);
                    } else {
                        v = 0.0;
                        for (Index cc = 0; cc < image.channels; ++cc) v += image.at(cc, y0 + dy, x0 + dx);
                        v /= static_cast<double>(image.channels);
                    }
                    X(c * area + dy * spec.edge + dx, i) = v;
                }
    }
    return X;
}

MatrixXd extract_patches_from_directory(const std::filesystem::path& dir, const PatchSpec& spec,
                                        Index max_per_image, std::uint64_t rng_seed) {
    if (!std::filesystem::is_directory(dir)) throw DataError("'" + dir.string() + "' is not a directory");
    std::vector<std::filesystem::path> files;
    for (const auto& entry : std::filesystem::directory_iterator(dir)) {
        const auto ext = entry.path().extension().string();
        if (entry.is_regular_file() && (ext == ".pgm" || ext == ".ppm" || ext == ".pnm")) files.push_back(entry.path());
    }
    std::sort(files.begin(), files.end());
    if (files.empty()) throw DataError("no .pgm/.ppm images in '" + dir.string() + "'");
    std::vector<MatrixXd> parts;
    Index total = 0;
    std::seed_seq seq{rng_seed};
    std::vector<std::uint64_t> seeds(files.size());
    seq.generate(seeds.begin(), seeds.end());
    for (std::size_t f = 0; f < files.size(); ++f) {
        parts.push_back(extract_patches(load_pnm(files[f]), spec, max_per_image, seeds[f]));
        total += parts.back().cols();
    }
    MatrixXd X(spec.dimension(), total);
    Index at = 0;
    for (const auto& p : parts) {
        X.middleCols(at, p.cols()) = p;
        at += p.cols();
    }
    return X;
}

MatrixXd preprocess(const MatrixXd& X, bool center, bool normalize) {
    MatrixXd Y = X;
    for (Index j = 0; j < Y.cols(); ++j) {
        if (center && Y.rows() > 0) Y.col(j).array() -= Y.col(j).mean();
        if (normalize) {
            const double nrm = Y.col(j).norm();
            if (nrm > 0) Y.col(j) /= nrm;
        }
    }
    return Y;
}

// --- streams and synthetic data --------------------------------------------

SampleStream::SampleStream(const MatrixXd& data, std::uint64_t rng_seed) : SampleStream(data.cols(), rng_seed) {
    data_ = &data;
}

SampleStream::SampleStream(Index n, std::uint64_t rng_seed) : rng_(rng_seed) {
    if (n < 1) throw DataError("sample stream needs at least one column");
    order_.resize(static_cast<std::size_t>(n));
    position_ = order_.size();
}

void SampleStream::reshuffle() {
    std::iota(order_.begin(), order_.end(), Index(0));
    std::shuffle(order_.begin(), order_.end(), rng_);
    position_ = 0;
    ++epoch_;
}

SampleStream::Draw SampleStream::next() {
    Draw d;
    if (position_ >= order_.size()) {
        reshuffle();
        d.starts_epoch = true;
    }
    d.index = order_[position_++];
    d.epoch = epoch_;
    return d;
}

SampleStream cycle_permuted(const MatrixXd& X, std::uint64_t rng_seed) { return SampleStream(X, rng_seed); }

PlantedData synth_planted(Index m, Index k, Index n, Index s, double sigma, std::uint64_t rng_seed) {
    if (m < 1 || k < 1 || n < 0) throw InvalidArgument("synth_planted: dimensions must be positive");
    if (s < 0 || s > k) throw InvalidArgument("synth_planted: sparsity must lie in [0, k]");
    if (!(sigma >= 0)) throw InvalidArgument("synth_planted: noise level must be non-negative");
    Rng rng(rng_seed);
    std::normal_distribution<double> normal(0.0, 1.0);
    PlantedData out;
    out.atoms.resize(m, k);
    for (Index j = 0; j < k; ++j) {
        double nrm = 0;
        while (!(nrm > 0)) {
            for (Index i = 0; i < m; ++i) out.atoms(i, j) = normal(rng);
            nrm = out.atoms.col(j).norm();
        }
        out.atoms.col(j) /= nrm;
    }
    out.codes = MatrixXd::Zero(k, n);
    std::vector<Index> idx(static_cast<std::size_t>(k));
    for (Index i = 0; i < n; ++i) {
        std::iota(idx.begin(), idx.end(), Index(0));
        for (Index a = 0; a < s; ++a) {
            std::uniform_int_distribution<Index> pick(a, k - 1);
            std::swap(idx[static_cast<std::size_t>(a)], idx[static_cast<std::size_t>(pick(rng))]);
            out.codes(idx[static_cast<std::size_t>(a)], i) = normal(rng);
        }
    }
    out.X = out.atoms * out.codes;
    if (sigma > 0)
        for (Index i = 0; i < n; ++i)
            for (Index r = 0; r < m; ++r) out.X(r, i) += sigma * normal(rng);
    return out;
}

}  // namespace omf
