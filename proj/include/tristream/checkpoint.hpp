#pragma once

// Version-tagged model checkpoints: the model config plus a manifest of
// named parameter tensors, text encoded for bit-exact round trips.

#include <fstream>
#include <iomanip>
#include <limits>
#include <map>
#include <sstream>
#include <string>

#include "tristream/model.hpp"

namespace tristream {

inline std::map<std::string, std::string> config_to_kv(const ThreeStreamConfig& c) {
    std::map<std::string, std::string> kv;
    kv["T"] = std::to_string(c.T);
    std::ostringstream an;
    for (std::size_t i = 0; i < c.anchors.size(); ++i) an << (i ? "," : "") << c.anchors[i];
    kv["anchors"] = an.str();
    kv["image_size"] = std::to_string(c.image_size);
    kv["channels"] = std::to_string(c.channels);
    kv["D1"] = std::to_string(c.D1);
    kv["D2"] = std::to_string(c.D2);
    kv["hidden"] = std::to_string(c.hidden);
    kv["dense_width"] = std::to_string(c.dense_width);
    std::ostringstream dr;
    dr << std::setprecision(17) << c.dropout_rate;
    kv["dropout"] = dr.str();
    kv["K"] = std::to_string(c.K);
    std::string streams;
    if (c.use_stream1) streams += "1";
    if (c.use_stream2) streams += streams.empty() ? "2" : ",2";
    if (c.use_stream3) streams += streams.empty() ? "3" : ",3";
    kv["streams"] = streams;
    kv["precomputed_features"] = c.precomputed_features ? "1" : "0";
    return kv;
}

inline ThreeStreamConfig config_from_kv(const std::map<std::string, std::string>& kv) {
    ThreeStreamConfig c;
    auto get = [&](const char* key) -> const std::string& {
        auto it = kv.find(key);
        if (it == kv.end()) throw DataError(std::string("config: missing key '") + key + "'");
        return it->second;
    };
    c.T = std::stoul(get("T"));
    c.anchors.clear();
    std::istringstream an(get("anchors"));
    std::string tok;
    while (std::getline(an, tok, ',')) c.anchors.push_back(std::stoul(tok));
    c.image_size = std::stoul(get("image_size"));
    c.channels = std::stoul(get("channels"));
    c.D1 = std::stoul(get("D1"));
    c.D2 = std::stoul(get("D2"));
    c.hidden = std::stoul(get("hidden"));
    c.dense_width = std::stoul(get("dense_width"));
    c.dropout_rate = std::stod(get("dropout"));
    c.K = std::stoi(get("K"));
    std::string streams = get("streams");
    c.use_stream1 = streams.find('1') != std::string::npos;
    c.use_stream2 = streams.find('2') != std::string::npos;
    c.use_stream3 = streams.find('3') != std::string::npos;
    c.precomputed_features = get("precomputed_features") == "1";
    c.validate();
    return c;
}

inline void save_checkpoint(const std::string& path, ThreeStreamParams& model, int epoch = 0) {
    std::ofstream out(path);
    if (!out) throw DataError(path + ": cannot open checkpoint for writing");
    out << "TRISTREAM-CKPT v1\n";
    for (const auto& [k, v] : config_to_kv(model.config)) out << "config." << k << "=" << v << "\n";
    out << "epoch=" << epoch << "\n";
    out << std::setprecision(17);
    model.visit_named([&](const std::string& name, Tensor& t) {
        out << "param " << name << " " << t.ndim();
        for (auto d : t.shape) out << " " << d;
        out << "\n";
        for (std::size_t i = 0; i < t.size(); ++i) out << (i ? " " : "") << t.data[i];
        out << "\n";
    });
}

struct Checkpoint {
    ThreeStreamParams model;
    int epoch = 0;
};

inline Checkpoint load_checkpoint(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw DataError(path + ": cannot open checkpoint");
    std::string line;
    std::getline(in, line);
    if (line != "TRISTREAM-CKPT v1") throw DataError(path + ": not a checkpoint file");
    std::map<std::string, std::string> cfg_kv;
    int epoch = 0;
    std::streampos param_start = in.tellg();
    while (std::getline(in, line)) {
        if (line.rfind("param ", 0) == 0) break;
        param_start = in.tellg();
        auto eq = line.find('=');
        if (eq == std::string::npos) continue;
        std::string key = line.substr(0, eq);
        if (key == "epoch") epoch = std::stoi(line.substr(eq + 1));
        else if (key.rfind("config.", 0) == 0) cfg_kv[key.substr(7)] = line.substr(eq + 1);
    }
    Checkpoint ck{ThreeStreamParams::create(config_from_kv(cfg_kv)), epoch};

    std::map<std::string, Tensor*> by_name;
    ck.model.visit_named([&](const std::string& n, Tensor& t) { by_name[n] = &t; });

    in.clear();
    in.seekg(param_start);
    std::size_t loaded = 0;
    while (std::getline(in, line)) {
        if (line.rfind("param ", 0) != 0) continue;
        std::istringstream hdr(line);
        std::string tag, name;
        std::size_t ndim;
        hdr >> tag >> name >> ndim;
        std::vector<std::size_t> shape(ndim);
        for (auto& d : shape) hdr >> d;
        auto it = by_name.find(name);
        if (it == by_name.end())
            throw DataError(path + ": checkpoint parameter '" + name +
                            "' does not exist in the configured model");
        Tensor* t = it->second;
        if (t->shape != shape)
            throw DataError(path + ": parameter '" + name + "' shape " + shape_to_string(shape) +
                            " does not match model " + shape_to_string(t->shape));
        for (std::size_t i = 0; i < t->size(); ++i)
            if (!(in >> t->data[i]))
                throw DataError(path + ": truncated values for parameter '" + name + "'");
        in.ignore(std::numeric_limits<std::streamsize>::max(), '\n');
        ++loaded;
    }
    if (loaded != by_name.size())
        throw DataError(path + ": checkpoint holds " + std::to_string(loaded) +
                        " parameters, model needs " + std::to_string(by_name.size()));
    return ck;
}

}  // namespace tristream
