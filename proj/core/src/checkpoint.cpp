#include "lutfuse/checkpoint.hpp"

#include <algorithm>
#include <bit>
#include <cstring>
#include <fstream>
#include <sstream>

#include "lutfuse/error.hpp"

namespace lutfuse::ad {

namespace {

constexpr char kMagic[4] = {'L', 'U', 'T', 'F'};

template <typename T>
void put_le(std::string& out, T value) {
    static_assert(std::is_integral_v<T>);
    for (std::size_t i = 0; i < sizeof(T); ++i) out.push_back(static_cast<char>((static_cast<std::uint64_t>(value) >> (8 * i)) & 0xFF));
}

class Reader {
public:
    explicit Reader(std::string_view bytes) : bytes_(bytes) {}

    template <typename T>
    T get(const char* what) {
        need(sizeof(T), what);
        std::uint64_t v = 0;
        for (std::size_t i = 0; i < sizeof(T); ++i) v |= static_cast<std::uint64_t>(static_cast<unsigned char>(bytes_[pos_ + i])) << (8 * i);
        pos_ += sizeof(T);
        return static_cast<T>(v);
    }

    std::string_view take(std::size_t n, const char* what) {
        need(n, what);
        auto s = bytes_.substr(pos_, n);
        pos_ += n;
        return s;
    }

    std::size_t offset() const { return pos_; }
    bool done() const { return pos_ == bytes_.size(); }

private:
    void need(std::size_t n, const char* what) {
        if (bytes_.size() - pos_ < n) {
            throw ParseError(std::string("checkpoint truncated while reading ") + what + " at offset " +
                             std::to_string(pos_));
        }
    }

    std::string_view bytes_;
    std::size_t pos_ = 0;
};

}  // namespace

void Checkpoint::put(const std::string& name, const Tensor& t) {
    put(name, t.shape(), std::vector<float>(t.data().begin(), t.data().end()));
}

void Checkpoint::put(const std::string& name, Shape shape, std::vector<float> values) {
    if (static_cast<std::int64_t>(values.size()) != numel_of(shape)) {
        throw ShapeError("checkpoint entry '" + name + "' payload does not match its shape");
    }
    for (auto& e : entries_) {
        if (e.name == name) {
            e.shape = std::move(shape);
            e.values = std::move(values);
            return;
        }
    }
    entries_.push_back({name, std::move(shape), std::move(values)});
}

const CheckpointEntry* Checkpoint::find(const std::string& name) const {
    for (const auto& e : entries_)
        if (e.name == name) return &e;
    return nullptr;
}

const CheckpointEntry& Checkpoint::at(const std::string& name) const {
    const auto* e = find(name);
    if (!e) throw ParseError("checkpoint has no entry '" + name + "'");
    return *e;
}

Tensor Checkpoint::tensor(const std::string& name) const {
    const auto& e = at(name);
    return Tensor::from(e.shape, e.values);
}

void Checkpoint::restore(const std::string& name, Tensor& dst) const {
    const auto& e = at(name);
    if (e.shape != dst.shape()) {
        throw ShapeError("checkpoint entry '" + name + "' has shape " + shape_to_string(e.shape) + ", expected " +
                         shape_to_string(dst.shape()));
    }
    std::copy(e.values.begin(), e.values.end(), dst.data().begin());
}

std::string Checkpoint::serialize() const {
    std::string out(kMagic, 4);
    put_le<std::uint32_t>(out, kCheckpointVersion);
    put_le<std::uint32_t>(out, static_cast<std::uint32_t>(entries_.size()));
    for (const auto& e : entries_) {
        put_le<std::uint32_t>(out, static_cast<std::uint32_t>(e.name.size()));
        out += e.name;
        put_le<std::uint32_t>(out, static_cast<std::uint32_t>(e.shape.size()));
        for (auto ext : e.shape) put_le<std::uint64_t>(out, static_cast<std::uint64_t>(ext));
        for (float v : e.values) put_le<std::uint32_t>(out, std::bit_cast<std::uint32_t>(v));
    }
    put_le<std::uint64_t>(out, metadata_.size());
    out += metadata_;
    return out;
}

Checkpoint Checkpoint::deserialize(std::string_view bytes) {
    Reader r(bytes);
    auto magic = r.take(4, "magic");
    if (std::memcmp(magic.data(), kMagic, 4) != 0) throw ParseError("not a checkpoint: bad magic at offset 0");
    const auto version = r.get<std::uint32_t>("version");
    if (version != kCheckpointVersion) {
        throw ParseError("unsupported checkpoint version " + std::to_string(version));
    }
    const auto count = r.get<std::uint32_t>("entry count");
    Checkpoint ckpt;
    for (std::uint32_t i = 0; i < count; ++i) {
        CheckpointEntry e;
        const auto name_len = r.get<std::uint32_t>("name length");
        e.name = std::string(r.take(name_len, "name"));
        const auto rank = r.get<std::uint32_t>("rank");
        if (rank > 16) throw ParseError("checkpoint entry '" + e.name + "' has implausible rank");
        std::uint64_t total = 1;
        for (std::uint32_t d = 0; d < rank; ++d) {
            const auto ext = r.get<std::uint64_t>("extent");
            if (ext == 0 || ext > (1ull << 32)) throw ParseError("checkpoint entry '" + e.name + "' has a bad extent");
            e.shape.push_back(static_cast<std::int64_t>(ext));
            total *= ext;
        }
        if (total > (bytes.size() / 4)) throw ParseError("checkpoint entry '" + e.name + "' exceeds file size");
        e.values.resize(total);
        for (auto& v : e.values) v = std::bit_cast<float>(r.get<std::uint32_t>("payload"));
        ckpt.entries_.push_back(std::move(e));
    }
    const auto meta_len = r.get<std::uint64_t>("metadata length");
    ckpt.metadata_ = std::string(r.take(static_cast<std::size_t>(meta_len), "metadata"));
    if (!r.done()) throw ParseError("trailing bytes after checkpoint at offset " + std::to_string(r.offset()));
    return ckpt;
}

void Checkpoint::save(const std::filesystem::path& path) const {
    const auto bytes = serialize();
    auto tmp = path;
    tmp += ".tmp";
    {
        std::ofstream f(tmp, std::ios::binary | std::ios::trunc);
        if (!f) throw IoError("cannot open '" + tmp.string() + "' for writing");
        f.write(bytes.data(), static_cast<std::streamsize>(bytes.size()));
        if (!f) throw IoError("failed writing '" + tmp.string() + "'");
    }
    std::filesystem::rename(tmp, path);
}

Checkpoint Checkpoint::load(const std::filesystem::path& path) {
    std::ifstream f(path, std::ios::binary);
    if (!f) throw IoError("cannot open checkpoint '" + path.string() + "'");
    std::ostringstream ss;
    ss << f.rdbuf();
    return deserialize(ss.str());
}

}  // namespace lutfuse::ad
