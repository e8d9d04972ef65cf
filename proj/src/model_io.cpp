#include "pathonet/model_io.hpp"

#include "pathonet/serial.hpp"

namespace pathonet {

static constexpr std::uint16_t kModelFormatVersion = 1;

std::vector<std::uint8_t> serialize_model(const Model<float>& model) {
    ByteWriter w;
    w.magic("MDF1");
    w.u16(kModelFormatVersion);
    w.str32(model.config.to_json());
    w.u32(static_cast<std::uint32_t>(model.params.size()));
    for (const auto& [name, t] : model.params) {
        w.str16(name);
        w.u8(static_cast<std::uint8_t>(t.rank()));
        for (int i = 0; i < t.rank(); ++i) w.u32(static_cast<std::uint32_t>(t.extent(i)));
        w.f32_array(t.data(), static_cast<std::size_t>(t.numel()));
    }
    return w.take();
}

Model<float> deserialize_model(const std::vector<std::uint8_t>& bytes, const std::string& what) {
    ByteReader r(bytes, what);
    r.expect_magic("MDF1", "MDF1 model");
    const std::uint16_t version = r.u16();
    if (version != kModelFormatVersion)
        throw FormatError(what + ": unsupported format version " + std::to_string(version));

    Model<float> m;
    m.config = NetworkConfig::from_json(r.str32());

    // expected parameter list, derived from the config
    std::vector<std::pair<std::string, std::vector<int>>> expected;
    for (const LayerSpec& l : m.config.layers)
        for (auto& e : detail::layer_param_shapes(l)) expected.push_back(std::move(e));

    const std::uint32_t count = r.u32();
    if (count != expected.size())
        throw FormatError(what + ": " + std::to_string(count) + " parameters, config expects " +
                          std::to_string(expected.size()));
    for (std::uint32_t i = 0; i < count; ++i) {
        const std::string name = r.str16();
        if (name != expected[i].first)
            throw FormatError(what + ": parameter " + std::to_string(i) + " is \"" + name +
                              "\", config expects \"" + expected[i].first + "\"");
        const int rank = r.u8();
        std::vector<int> shape(static_cast<std::size_t>(rank));
        for (int d = 0; d < rank; ++d) shape[static_cast<std::size_t>(d)] = static_cast<int>(r.u32());
        if (shape != expected[i].second)
            throw FormatError(what + ": parameter \"" + name + "\" has shape " +
                              Tensor<float>::shape_str(shape) + ", config expects " +
                              Tensor<float>::shape_str(expected[i].second));
        const std::int64_t n = Tensor<float>::checked_numel(shape);
        std::vector<float> data(static_cast<std::size_t>(n));
        r.raw(data.data(), static_cast<std::size_t>(n) * sizeof(float));
        m.params.emplace_back(name, Tensor<float>::from_data(shape, std::move(data)));
    }
    if (r.remaining() != 0)
        throw FormatError(what + ": " + std::to_string(r.remaining()) + " trailing bytes");
    return m;
}

void save_model(const Model<float>& model, const std::string& path) {
    write_file(path, serialize_model(model));
}

Model<float> load_model(const std::string& path) {
    return deserialize_model(read_file(path), path);
}

} // namespace pathonet
