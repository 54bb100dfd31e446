#include "cpdpm/io.hpp"

#include <bit>
#include <cstring>
#include <fstream>
#include <iterator>

namespace cpdpm {

namespace {

class Writer
{
public:
    explicit Writer(std::size_t reserve) { out_.reserve(reserve); }

    void magic(const char (&tag)[5]) { out_.insert(out_.end(), tag, tag + 4); }

    void u32(std::uint32_t v)
    {
        for (int s = 0; s < 32; s += 8) out_.push_back(static_cast<std::uint8_t>(v >> s));
    }
    void u64(std::uint64_t v)
    {
        for (int s = 0; s < 64; s += 8) out_.push_back(static_cast<std::uint8_t>(v >> s));
    }
    void f32(double v) { u32(std::bit_cast<std::uint32_t>(static_cast<float>(v))); }
    void f64(double v) { u64(std::bit_cast<std::uint64_t>(v)); }

    Bytes take() { return std::move(out_); }

private:
    Bytes out_;
};

class Reader
{
public:
    explicit Reader(const Bytes& in) : in_(in) {}

    void magic(const char (&tag)[5])
    {
        need(4, "magic");
        if (std::memcmp(in_.data() + pos_, tag, 4) != 0) {
            throw FormatError(std::string("bad magic, expected ") + tag, pos_);
        }
        pos_ += 4;
    }
    std::uint32_t u32(const char* field)
    {
        need(4, field);
        std::uint32_t v = 0;
        for (int s = 0; s < 4; ++s) v |= static_cast<std::uint32_t>(in_[pos_ + s]) << (8 * s);
        pos_ += 4;
        return v;
    }
    std::uint64_t u64(const char* field)
    {
        need(8, field);
        std::uint64_t v = 0;
        for (int s = 0; s < 8; ++s) v |= static_cast<std::uint64_t>(in_[pos_ + s]) << (8 * s);
        pos_ += 8;
        return v;
    }
    double f32(const char* field)
    {
        const std::size_t at = pos_;
        const double v = std::bit_cast<float>(u32(field));
        if (!std::isfinite(v)) throw FormatError(std::string("non-finite value in ") + field, at);
        return v;
    }
    double f64(const char* field)
    {
        const std::size_t at = pos_;
        const double v = std::bit_cast<double>(u64(field));
        if (!std::isfinite(v)) throw FormatError(std::string("non-finite value in ") + field, at);
        return v;
    }
    std::size_t pos() const { return pos_; }
    void finish()
    {
        if (pos_ != in_.size()) throw FormatError("trailing bytes", pos_);
    }

private:
    void need(std::size_t k, const char* field)
    {
        if (in_.size() - pos_ < k) throw FormatError(std::string("truncated while reading ") + field, pos_);
    }

    const Bytes& in_;
    std::size_t pos_ = 0;
};

std::uint32_t checked_u32(std::size_t v, const char* what)
{
    if (v > 0xffffffffu) throw std::invalid_argument(std::string(what) + " exceeds 32 bits");
    return static_cast<std::uint32_t>(v);
}

Dims3 read_extents(Reader& r)
{
    const std::size_t at = r.pos();
    Dims3 d{r.u32("extent n"), r.u32("extent m"), r.u32("extent l")};
    if (d.n == 0 || d.m == 0 || d.l == 0) throw FormatError("zero extent " + to_string(d), at);
    return d;
}

}  // namespace

Bytes encode_t3f(const Tensor3d& t)
{
    Writer w(t3f_header_bytes + 4 * t.size());
    w.magic("T3F1");
    w.u32(checked_u32(t.n(), "extent"));
    w.u32(checked_u32(t.m(), "extent"));
    w.u32(checked_u32(t.l(), "extent"));
    for (Eigen::Index i = 0; i < t.data().size(); ++i) w.f32(t.data()[i]);
    return w.take();
}

Tensor3d decode_t3f(const Bytes& bytes)
{
    Reader r(bytes);
    r.magic("T3F1");
    const Dims3 d = read_extents(r);
    if ((bytes.size() - r.pos()) / 4 < d.size()) {
        throw FormatError("truncated payload: " + to_string(d) + " needs " + std::to_string(4 * d.size()) + " bytes",
                          r.pos());
    }
    Vectord data(static_cast<Eigen::Index>(d.size()));
    for (Eigen::Index i = 0; i < data.size(); ++i) data[i] = r.f32("tensor data");
    r.finish();
    return Tensor3d(d, std::move(data));
}

Bytes encode_cpf(const CPModeld& model)
{
    if (const std::string err = model.check(1e-6); !err.empty()) throw std::invalid_argument("encode_cpf: " + err);
    const Dims3 d = model.dims();
    const std::size_t r = model.rank();
    Writer w(cpf_header_bytes + 8 * r + 4 * model.factor_elements());
    w.magic("CPF1");
    w.u32(checked_u32(r, "rank"));
    w.u32(checked_u32(d.n, "extent"));
    w.u32(checked_u32(d.m, "extent"));
    w.u32(checked_u32(d.l, "extent"));
    for (Eigen::Index j = 0; j < model.weights.size(); ++j) w.f64(model.weights[j]);
    for (const Matrixd* f : {&model.a, &model.b, &model.c}) {
        for (Eigen::Index i = 0; i < f->rows(); ++i) {
            for (Eigen::Index j = 0; j < f->cols(); ++j) w.f32((*f)(i, j));
        }
    }
    return w.take();
}

CPModeld decode_cpf(const Bytes& bytes)
{
    Reader r(bytes);
    r.magic("CPF1");
    const std::size_t at_rank = r.pos();
    const std::size_t rank = r.u32("rank");
    if (rank == 0) throw FormatError("zero rank", at_rank);
    const Dims3 d = read_extents(r);
    const std::size_t need = 8 * rank + 4 * rank * (d.n + d.m + d.l);
    if (bytes.size() - r.pos() < need) {
        throw FormatError("truncated payload: rank " + std::to_string(rank) + " over " + to_string(d), r.pos());
    }
    const auto R = static_cast<Eigen::Index>(rank);
    CPModeld m{Vectord(R), Matrixd(static_cast<Eigen::Index>(d.n), R), Matrixd(static_cast<Eigen::Index>(d.m), R),
               Matrixd(static_cast<Eigen::Index>(d.l), R)};
    for (Eigen::Index j = 0; j < R; ++j) m.weights[j] = r.f64("weights");
    for (Matrixd* f : {&m.a, &m.b, &m.c}) {
        for (Eigen::Index i = 0; i < f->rows(); ++i) {
            for (Eigen::Index j = 0; j < R; ++j) (*f)(i, j) = r.f32("factor data");
        }
    }
    r.finish();
    if (const std::string err = m.check(1e-5); !err.empty()) throw FormatError(err, cpf_header_bytes);
    return m;
}

Bytes read_file(const std::filesystem::path& path)
{
    std::ifstream in(path, std::ios::binary);
    if (!in) throw std::invalid_argument("cannot open " + path.string());
    return Bytes(std::istreambuf_iterator<char>(in), std::istreambuf_iterator<char>());
}

void write_file(const std::filesystem::path& path, const Bytes& bytes)
{
    if (path.has_parent_path()) std::filesystem::create_directories(path.parent_path());
    std::ofstream out(path, std::ios::binary | std::ios::trunc);
    if (!out) throw std::runtime_error("cannot write " + path.string());
    out.write(reinterpret_cast<const char*>(bytes.data()), static_cast<std::streamsize>(bytes.size()));
    if (!out) throw std::runtime_error("write failed for " + path.string());
}

Tensor3d round_to_float(Tensor3d t)
{
    for (Eigen::Index i = 0; i < t.data().size(); ++i) t.data()[i] = static_cast<float>(t.data()[i]);
    return t;
}

CPModeld round_to_float(CPModeld m)
{
    for (Matrixd* f : {&m.a, &m.b, &m.c}) *f = f->cast<float>().cast<double>();
    return m;
}

}  // namespace cpdpm
