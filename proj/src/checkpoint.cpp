#include "fggsl/checkpoint.hpp"

#include "fggsl/errors.hpp"

#include <array>
#include <bit>
#include <fstream>
#include <iterator>
#include <vector>

namespace fggsl {

using nlohmann::json;

namespace {

constexpr std::array<char, 8> kMagic{'F', 'G', 'G', 'S', 'L', 'C', 'K', '\x01'};

template <typename U>
void put_le(std::string& out, U v) {
    for (std::size_t b = 0; b < sizeof(U); ++b) out.push_back(static_cast<char>((v >> (8 * b)) & 0xFF));
}

class Reader {
public:
    Reader(std::string data, std::string origin) : data_(std::move(data)), origin_(std::move(origin)) {}

    template <typename U>
    U get_le(const char* what) {
        need(sizeof(U), what);
        U v = 0;
        for (std::size_t b = 0; b < sizeof(U); ++b)
            v |= static_cast<U>(static_cast<unsigned char>(data_[pos_ + b])) << (8 * b);
        pos_ += sizeof(U);
        return v;
    }

    std::string bytes(std::size_t n, const char* what) {
        need(n, what);
        std::string s = data_.substr(pos_, n);
        pos_ += n;
        return s;
    }

    bool at_end() const { return pos_ == data_.size(); }
    [[noreturn]] void fail(const std::string& msg) const {
        throw ParseError(origin_ + ": " + msg + " (offset " + std::to_string(pos_) + ")");
    }

private:
    void need(std::size_t n, const char* what) const {
        if (data_.size() - pos_ < n) fail(std::string("truncated while reading ") + what);
    }

    std::string data_;
    std::string origin_;
    std::size_t pos_ = 0;
};

}  // namespace

json CheckpointHeader::to_json() const {
    return json{{"format", 1},
                {"J", model.J},
                {"mode", fggsl::to_string(model.mode)},
                {"variant", fggsl::to_string(model.variant)},
                {"D", model.mask_dim},
                {"alpha", alpha},
                {"beta", beta},
                {"features", features},
                {"classes", classes},
                {"candidate", candidate},
                {"seed", seed},
                {"split_id", split_id}};
}

CheckpointHeader CheckpointHeader::from_json(const json& j) {
    try {
        CheckpointHeader h;
        h.model.J = j.at("J").get<int>();
        h.model.mode = parse_kernel_mode(j.at("mode").get<std::string>());
        h.model.variant = parse_variant(j.at("variant").get<std::string>());
        h.model.mask_dim = j.at("D").get<int>();
        h.alpha = j.at("alpha").get<double>();
        h.beta = j.at("beta").get<double>();
        h.features = j.at("features").get<int>();
        h.classes = j.at("classes").get<int>();
        h.candidate = j.at("candidate").get<std::string>();
        h.seed = j.at("seed").get<std::uint64_t>();
        h.split_id = j.value("split_id", 0);
        return h;
    } catch (const json::exception& e) {
        throw ParseError(std::string("checkpoint header: ") + e.what());
    } catch (const ValidationError& e) {
        throw ParseError(std::string("checkpoint header: ") + e.what());
    }
}

void save_checkpoint(const std::filesystem::path& path, const FgGSLModel& model, const CheckpointHeader& header) {
    std::string buf(kMagic.begin(), kMagic.end());
    const std::string head = header.to_json().dump();
    put_le<std::uint32_t>(buf, static_cast<std::uint32_t>(head.size()));
    buf += head;
    const ad::ParameterSet& params = model.params();
    const auto& names = params.names();
    put_le<std::uint32_t>(buf, static_cast<std::uint32_t>(names.size()));
    for (const std::string& name : names) {
        const Matrix& m = params.value(name);
        put_le<std::uint32_t>(buf, static_cast<std::uint32_t>(name.size()));
        buf += name;
        put_le<std::uint64_t>(buf, static_cast<std::uint64_t>(m.rows()));
        put_le<std::uint64_t>(buf, static_cast<std::uint64_t>(m.cols()));
        for (Eigen::Index k = 0; k < m.size(); ++k) put_le<std::uint64_t>(buf, std::bit_cast<std::uint64_t>(m.data()[k]));
    }
    if (path.has_parent_path()) {
        std::error_code ec;
        std::filesystem::create_directories(path.parent_path(), ec);
    }
    std::ofstream out(path, std::ios::binary);
    if (!out) throw IoError("cannot open " + path.string() + " for writing");
    out.write(buf.data(), static_cast<std::streamsize>(buf.size()));
    if (!out) throw IoError("write failed: " + path.string());
}

Checkpoint load_checkpoint(const std::filesystem::path& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw IoError("cannot open checkpoint " + path.string());
    std::string data((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
    Reader r(std::move(data), path.string());

    if (r.bytes(kMagic.size(), "magic") != std::string(kMagic.begin(), kMagic.end())) r.fail("not a checkpoint file");
    const auto head_len = r.get_le<std::uint32_t>("header length");
    const std::string head = r.bytes(head_len, "header");
    json hj = json::parse(head, nullptr, false);
    if (hj.is_discarded() || !hj.is_object()) r.fail("header is not a JSON object");
    CheckpointHeader header = CheckpointHeader::from_json(hj);

    ad::ParameterSet params;
    const auto count = r.get_le<std::uint32_t>("tensor count");
    for (std::uint32_t t = 0; t < count; ++t) {
        const auto name_len = r.get_le<std::uint32_t>("name length");
        const std::string name = r.bytes(name_len, "tensor name");
        const auto rows = r.get_le<std::uint64_t>("rows");
        const auto cols = r.get_le<std::uint64_t>("cols");
        if (rows > (1u << 24) || cols > (1u << 24)) r.fail("implausible shape for tensor '" + name + "'");
        Matrix m(static_cast<Eigen::Index>(rows), static_cast<Eigen::Index>(cols));
        for (Eigen::Index k = 0; k < m.size(); ++k) m.data()[k] = std::bit_cast<double>(r.get_le<std::uint64_t>("values"));
        if (params.contains(name)) r.fail("duplicate tensor '" + name + "'");
        params.add(name, std::move(m));
    }
    if (!r.at_end()) r.fail("trailing bytes");
    try {
        FgGSLModel model(header.features, header.classes, header.model, std::move(params));
        return {std::move(header), std::move(model)};
    } catch (const DimensionError& e) {
        throw ParseError(path.string() + ": " + e.what());
    } catch (const ContractError& e) {
        throw ParseError(path.string() + ": " + e.what());
    }
}

}  // namespace fggsl
