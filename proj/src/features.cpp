#include "cpdpm/features.hpp"

#include "cpdpm/io.hpp"

#include <cmath>
#include <fstream>
#include <numbers>
#include <sstream>

namespace cpdpm {

FeatureMapd extract_features(const Image& image, int cell_size, int bins)
{
    if (cell_size < 1 || bins < 1) throw std::invalid_argument("extract_features: cell_size and bins must be >= 1");
    const Eigen::Index H = image.rows();
    const Eigen::Index W = image.cols();
    if (H < cell_size || W < cell_size) {
        throw std::invalid_argument("extract_features: image " + std::to_string(H) + "x" + std::to_string(W)
                                    + " smaller than one cell");
    }
    if (!image.allFinite()) throw std::invalid_argument("extract_features: non-finite pixel");
    const Eigen::Index cy = H / cell_size;
    const Eigen::Index cx = W / cell_size;
    FeatureMapd hist(static_cast<std::size_t>(cy), static_cast<std::size_t>(cx), static_cast<std::size_t>(bins));

    auto px = [&](Eigen::Index y, Eigen::Index x) {
        return image(std::clamp<Eigen::Index>(y, 0, H - 1), std::clamp<Eigen::Index>(x, 0, W - 1));
    };
    for (Eigen::Index y = 0; y < cy * cell_size; ++y) {
        for (Eigen::Index x = 0; x < cx * cell_size; ++x) {
            const double gx = px(y, x + 1) - px(y, x - 1);
            const double gy = px(y + 1, x) - px(y - 1, x);
            const double mag = std::hypot(gx, gy);
            if (mag == 0) continue;
            double theta = std::atan2(gy, gx);
            if (theta < 0) theta += std::numbers::pi;
            int bin = static_cast<int>(std::floor(theta / std::numbers::pi * bins));
            bin = ((bin % bins) + bins) % bins;
            hist(static_cast<std::size_t>(y / cell_size), static_cast<std::size_t>(x / cell_size),
                 static_cast<std::size_t>(bin)) += mag;
        }
    }

    constexpr double eps = 1e-6;
    FeatureMapd out(hist.dims());
    for (Eigen::Index y = 0; y < cy; ++y) {
        for (Eigen::Index x = 0; x < cx; ++x) {
            double energy = 0;
            for (Eigen::Index by = y; by < std::min(y + 2, cy); ++by) {
                for (Eigen::Index bx = x; bx < std::min(x + 2, cx); ++bx) {
                    for (int k = 0; k < bins; ++k) {
                        const double v = hist(static_cast<std::size_t>(by), static_cast<std::size_t>(bx),
                                              static_cast<std::size_t>(k));
                        energy += v * v;
                    }
                }
            }
            const double scale = 1.0 / (std::sqrt(energy) + eps);
            for (int k = 0; k < bins; ++k) {
                const auto yy = static_cast<std::size_t>(y), xx = static_cast<std::size_t>(x),
                           kk = static_cast<std::size_t>(k);
                out(yy, xx, kk) = hist(yy, xx, kk) * scale;
            }
        }
    }
    return out;
}

namespace {

// Next whitespace-delimited token, skipping '#' comments.
std::string pgm_token(std::istream& in)
{
    std::string tok;
    char ch;
    while (in.get(ch)) {
        if (ch == '#') {
            std::string skip;
            std::getline(in, skip);
            continue;
        }
        if (std::isspace(static_cast<unsigned char>(ch))) {
            if (!tok.empty()) break;
            continue;
        }
        tok.push_back(ch);
    }
    return tok;
}

}  // namespace

Image read_pgm(const std::filesystem::path& path)
{
    const Bytes bytes = read_file(path);
    std::istringstream in(std::string(bytes.begin(), bytes.end()));
    const std::string magic = pgm_token(in);
    if (magic != "P5" && magic != "P2") throw FormatError(path.string() + ": not a PGM file", 0);
    int w = 0, h = 0, maxval = 0;
    try {
        w = std::stoi(pgm_token(in));
        h = std::stoi(pgm_token(in));
        maxval = std::stoi(pgm_token(in));
    } catch (const std::exception&) {
        throw FormatError(path.string() + ": malformed PGM header", static_cast<std::size_t>(in.tellg()));
    }
    if (w <= 0 || h <= 0 || maxval <= 0 || maxval > 65535) {
        throw FormatError(path.string() + ": bad PGM dimensions", static_cast<std::size_t>(in.tellg()));
    }
    Image img(h, w);
    if (magic == "P2") {
        for (int y = 0; y < h; ++y) {
            for (int x = 0; x < w; ++x) {
                const std::string tok = pgm_token(in);
                if (tok.empty()) throw FormatError(path.string() + ": truncated PGM data", bytes.size());
                img(y, x) = std::stod(tok);
            }
        }
        return img;
    }
    const std::size_t bpp = maxval > 255 ? 2 : 1;
    const auto start = static_cast<std::size_t>(in.tellg());
    if (bytes.size() < start + bpp * static_cast<std::size_t>(w) * static_cast<std::size_t>(h)) {
        throw FormatError(path.string() + ": truncated PGM data", bytes.size());
    }
    std::size_t at = start;
    for (int y = 0; y < h; ++y) {
        for (int x = 0; x < w; ++x) {
            img(y, x) = bpp == 1 ? bytes[at] : (bytes[at] << 8 | bytes[at + 1]);
            at += bpp;
        }
    }
    return img;
}

void write_pgm(const std::filesystem::path& path, const Image& image)
{
    std::string header = "P5\n" + std::to_string(image.cols()) + " " + std::to_string(image.rows()) + "\n255\n";
    Bytes bytes(header.begin(), header.end());
    for (Eigen::Index y = 0; y < image.rows(); ++y) {
        for (Eigen::Index x = 0; x < image.cols(); ++x) {
            bytes.push_back(static_cast<std::uint8_t>(std::clamp(std::lround(image(y, x)), 0L, 255L)));
        }
    }
    write_file(path, bytes);
}

}  // namespace cpdpm
