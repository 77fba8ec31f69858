#include "uad/io.hpp"

#include <algorithm>
#include <bit>
#include <cstring>
#include <fstream>
#include <sstream>

namespace uad {

static_assert(std::endian::native == std::endian::little,
              "file formats assume a little-endian host");

namespace {

template <typename T>
void put(std::ostream& os, T v) {
    os.write(reinterpret_cast<const char*>(&v), sizeof(T));
}

template <typename T>
T get(std::istream& is, const char* what) {
    T v;
    is.read(reinterpret_cast<char*>(&v), sizeof(T));
    if (!is) throw std::runtime_error(std::string("truncated file while reading ") + what);
    return v;
}

}  // namespace

void write_uadt(std::ostream& os, const Tensor& t) {
    os.write("UADT", 4);
    put<std::uint16_t>(os, 1);
    put<std::uint16_t>(os, static_cast<std::uint16_t>(t.rank()));
    for (int e : t.shape) put<std::uint32_t>(os, static_cast<std::uint32_t>(e));
    os.write(reinterpret_cast<const char*>(t.data.data()),
             static_cast<std::streamsize>(t.data.size() * sizeof(float)));
}

Tensor read_uadt(std::istream& is) {
    char magic[4];
    is.read(magic, 4);
    if (!is || std::memcmp(magic, "UADT", 4) != 0)
        throw std::runtime_error("UADT: bad magic bytes");
    auto version = get<std::uint16_t>(is, "UADT version");
    if (version != 1) throw std::runtime_error("UADT: unsupported version " + std::to_string(version));
    auto rank = get<std::uint16_t>(is, "UADT rank");
    std::vector<int> shape(rank);
    for (auto& e : shape) e = static_cast<int>(get<std::uint32_t>(is, "UADT extent"));
    Tensor t(shape);
    is.read(reinterpret_cast<char*>(t.data.data()),
            static_cast<std::streamsize>(t.data.size() * sizeof(float)));
    if (!is) throw std::runtime_error("UADT: truncated payload");
    return t;
}

void save_tensor(const std::filesystem::path& path, const Tensor& t) {
    std::ofstream os(path, std::ios::binary);
    if (!os) throw std::runtime_error("cannot open for write: " + path.string());
    write_uadt(os, t);
}

Tensor load_tensor(const std::filesystem::path& path) {
    std::ifstream is(path, std::ios::binary);
    if (!is) throw std::runtime_error("cannot open: " + path.string());
    return read_uadt(is);
}

void save_pgm(const std::filesystem::path& path, const Tensor& img) {
    if (img.rank() != 3 || img.shape[0] != 1)
        throw std::invalid_argument("save_pgm: expected [1,H,W]");
    const int h = img.shape[1], w = img.shape[2];
    std::ostringstream os;
    os << "P5\n" << w << " " << h << "\n65535\n";
    for (float v : img.data) {
        double c = std::clamp(static_cast<double>(v), 0.0, 1.0);
        auto q = static_cast<std::uint16_t>(std::lround(c * 65535.0));
        char hi = static_cast<char>(q >> 8), lo = static_cast<char>(q & 0xff);
        os.put(hi).put(lo);
    }
    atomic_write_text(path, os.str());
}

Tensor load_pgm(const std::filesystem::path& path) {
    std::ifstream is(path, std::ios::binary);
    if (!is) throw std::runtime_error("cannot open: " + path.string());
    std::string magic;
    is >> magic;
    if (magic != "P5") throw std::runtime_error("PGM: expected P5: " + path.string());
    int w, h, maxval;
    is >> w >> h >> maxval;
    is.get();  // single whitespace after header
    if (w <= 0 || h <= 0 || (maxval != 255 && maxval != 65535))
        throw std::runtime_error("PGM: bad header: " + path.string());
    Tensor img({1, h, w});
    if (maxval == 255) {
        std::vector<unsigned char> buf(static_cast<std::size_t>(w) * h);
        is.read(reinterpret_cast<char*>(buf.data()), static_cast<std::streamsize>(buf.size()));
        if (!is) throw std::runtime_error("PGM: truncated: " + path.string());
        for (std::size_t i = 0; i < buf.size(); ++i)
            img.data[i] = static_cast<float>(buf[i] / 255.0);
    } else {
        std::vector<unsigned char> buf(static_cast<std::size_t>(w) * h * 2);
        is.read(reinterpret_cast<char*>(buf.data()), static_cast<std::streamsize>(buf.size()));
        if (!is) throw std::runtime_error("PGM: truncated: " + path.string());
        for (std::size_t i = 0; i < img.data.size(); ++i) {
            unsigned q = (static_cast<unsigned>(buf[2 * i]) << 8) | buf[2 * i + 1];
            img.data[i] = static_cast<float>(q / 65535.0);
        }
    }
    return img;
}

std::map<std::string, std::string> parse_config_text(std::istream& is) {
    std::map<std::string, std::string> out;
    std::string line;
    auto trim = [](std::string s) {
        auto b = s.find_first_not_of(" \t\r");
        auto e = s.find_last_not_of(" \t\r");
        return b == std::string::npos ? std::string() : s.substr(b, e - b + 1);
    };
    while (std::getline(is, line)) {
        auto hash = line.find('#');
        if (hash != std::string::npos) line.erase(hash);
        auto eq = line.find('=');
        if (eq == std::string::npos) continue;
        std::string k = trim(line.substr(0, eq));
        std::string v = trim(line.substr(eq + 1));
        if (!k.empty()) out[k] = v;
    }
    return out;
}

std::map<std::string, std::string> load_config_file(const std::filesystem::path& path) {
    std::ifstream is(path);
    if (!is) throw std::runtime_error("cannot open config: " + path.string());
    return parse_config_text(is);
}

void atomic_write_text(const std::filesystem::path& path, const std::string& content) {
    auto tmp = path;
    tmp += ".tmp";
    {
        std::ofstream os(tmp, std::ios::binary);
        if (!os) throw std::runtime_error("cannot open for write: " + tmp.string());
        os.write(content.data(), static_cast<std::streamsize>(content.size()));
    }
    std::filesystem::rename(tmp, path);
}

}  // namespace uad
