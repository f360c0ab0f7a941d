#include "bdt/io.hpp"

#include <json.hpp>

#include <filesystem>
#include <fstream>
#include <set>
#include <sstream>
#include <stdexcept>

namespace bdt {

using nlohmann::json;

namespace {

constexpr int kSchemaVersion = 1;

std::ofstream open_out(const std::string& path, bool force) {
    if (!force && std::filesystem::exists(path))
        throw std::runtime_error("refusing to overwrite " + path + " (use --force)");
    std::ofstream out(path);
    if (!out) throw std::runtime_error("cannot open " + path + " for writing");
    return out;
}

json box_to_json(const Box& box) {
    return json::array({box.v[0], box.v[1], box.v[2], box.v[3]});
}

Box box_from_json(const json& j) {
    if (!j.is_array() || j.size() != 4) throw std::runtime_error("box must have 4 numbers");
    return Box(j[0].get<double>(), j[1].get<double>(), j[2].get<double>(),
               j[3].get<double>());
}

json parse_line(const std::string& path, const std::string& line, int line_no) {
    try {
        return json::parse(line);
    } catch (const std::exception& ex) {
        throw std::runtime_error(path + ":" + std::to_string(line_no) +
                                 ": parse error: " + ex.what());
    }
}

void check_header(const json& header, const std::string& schema, const std::string& path) {
    if (!header.contains("schema") || header["schema"] != schema)
        throw std::runtime_error(path + ": expected schema " + schema);
    if (!header.contains("version") || header["version"].get<int>() != kSchemaVersion)
        throw std::runtime_error(path + ": unsupported schema version");
}

}  // namespace

void write_anchors(const std::string& path, std::span<const FrameObservations> frames,
                   int num_classes, bool force) {
    auto out = open_out(path, force);
    out << json{{"schema", "bdt.anchors"}, {"version", kSchemaVersion},
                {"num_classes", num_classes}}
        << "\n";
    for (const auto& frame : frames) {
        json anchors = json::array();
        for (const auto& a : frame.anchors) {
            json k = json::array();
            for (int i = 0; i < a.class_scores.size(); ++i) k.push_back(a.class_scores[i]);
            anchors.push_back(
                {{"box", box_to_json(a.box)}, {"e", a.appearance}, {"k", std::move(k)}});
        }
        out << json{{"frame", frame.frame_index}, {"anchors", std::move(anchors)}} << "\n";
    }
}

std::vector<FrameObservations> read_anchors(const std::string& path, int* num_classes) {
    std::ifstream in(path);
    if (!in) throw std::runtime_error("cannot open " + path);
    std::string line;
    int line_no = 0;
    std::vector<FrameObservations> frames;
    int classes = 0;
    while (std::getline(in, line)) {
        ++line_no;
        if (line.empty()) continue;
        const json j = parse_line(path, line, line_no);
        if (line_no == 1) {
            check_header(j, "bdt.anchors", path);
            classes = j["num_classes"].get<int>();
            continue;
        }
        FrameObservations frame;
        frame.frame_index = j.at("frame").get<int>();
        for (const auto& ja : j.at("anchors")) {
            AnchorObservation a;
            a.box = box_from_json(ja.at("box"));
            a.appearance = ja.at("e").get<double>();
            if (!(a.appearance > 0.0 && a.appearance < 1.0))
                throw std::runtime_error(path + ":" + std::to_string(line_no) +
                                         ": appearance must be in (0,1)");
            const auto& jk = ja.at("k");
            a.class_scores = Eigen::VectorXd(jk.size());
            double sum = 0.0;
            for (std::size_t i = 0; i < jk.size(); ++i) {
                a.class_scores[i] = jk[i].get<double>();
                sum += a.class_scores[i];
            }
            if (std::abs(sum - 1.0) > 1e-6)
                throw std::runtime_error(path + ":" + std::to_string(line_no) +
                                         ": class scores must sum to 1");
            frame.anchors.push_back(std::move(a));
        }
        frames.push_back(std::move(frame));
    }
    if (num_classes) *num_classes = classes;
    return frames;
}

void write_tracks(const std::string& path, const TrackOutput& tracks,
                  const std::string& method, bool force) {
    auto out = open_out(path, force);
    out << json{{"schema", "bdt.tracks"}, {"version", kSchemaVersion}, {"method", method}}
        << "\n";
    out.precision(17);
    for (const auto& frame : tracks) {
        json objects = json::array();
        for (const auto& t : frame.tracks) {
            json obj{{"id", t.id},
                     {"box", box_to_json(t.box)},
                     {"class", t.class_id},
                     {"conf", t.confidence}};
            if (t.cov != Mat4::Identity()) {
                json cov = json::array();
                for (int r = 0; r < 4; ++r)
                    for (int c = 0; c < 4; ++c) cov.push_back(t.cov(r, c));
                obj["cov"] = std::move(cov);
            }
            objects.push_back(std::move(obj));
        }
        out << json{{"frame", frame.frame_index}, {"objects", std::move(objects)}} << "\n";
    }
}

TrackOutput read_tracks(const std::string& path, std::string* method) {
    std::ifstream in(path);
    if (!in) throw std::runtime_error("cannot open " + path);
    std::string line;
    int line_no = 0;
    TrackOutput tracks;
    while (std::getline(in, line)) {
        ++line_no;
        if (line.empty()) continue;
        const json j = parse_line(path, line, line_no);
        if (line_no == 1) {
            check_header(j, "bdt.tracks", path);
            if (method) *method = j.value("method", std::string("unknown"));
            continue;
        }
        TrackFrame frame;
        frame.frame_index = j.at("frame").get<int>();
        for (const auto& jo : j.at("objects")) {
            TrackRecord rec;
            rec.id = jo.at("id").get<std::int64_t>();
            rec.box = box_from_json(jo.at("box"));
            rec.class_id = jo.at("class").get<int>();
            rec.confidence = jo.at("conf").get<double>();
            if (jo.contains("cov")) {
                const auto& jc = jo["cov"];
                if (jc.size() != 16)
                    throw std::runtime_error(path + ":" + std::to_string(line_no) +
                                             ": cov must have 16 numbers");
                for (int r = 0; r < 4; ++r)
                    for (int c = 0; c < 4; ++c) rec.cov(r, c) = jc[r * 4 + c].get<double>();
            }
            frame.tracks.push_back(std::move(rec));
        }
        tracks.push_back(std::move(frame));
    }
    return tracks;
}

void write_truth(const std::string& path, std::span<const std::vector<ObjectState>> truth,
                 bool force) {
    TrackOutput out;
    for (std::size_t t = 0; t < truth.size(); ++t) {
        TrackFrame frame;
        frame.frame_index = static_cast<int>(t);
        for (const auto& obj : truth[t]) {
            TrackRecord rec;
            rec.id = obj.track_id;
            rec.box = obj.box;
            rec.class_id = obj.class_id;
            rec.confidence = 1.0;
            frame.tracks.push_back(rec);
        }
        out.push_back(std::move(frame));
    }
    write_tracks(path, out, "truth", force);
}

std::vector<FrameTruth> read_truth(const std::string& path) {
    std::string method;
    const TrackOutput tracks = read_tracks(path, &method);
    std::vector<FrameTruth> truth;
    for (const auto& frame : tracks) {
        FrameTruth ft;
        ft.frame_index = frame.frame_index;
        for (const auto& t : frame.tracks) {
            ObjectState obj;
            obj.box = t.box;
            obj.class_id = t.class_id;
            obj.track_id = t.id;
            ft.objects.push_back(obj);
        }
        truth.push_back(std::move(ft));
    }
    return truth;
}

namespace {

const std::set<std::string>& known_keys() {
    static const std::set<std::string> keys = {
        "model.lambda_death", "model.lambda_birth", "model.lambda_birth0",
        "model.alpha", "model.num_classes", "model.prior_mean", "model.prior_std",
        "model.iou_min", "model.cluster_iou", "model.eps_pd",
        "motion.a", "motion.b", "motion.log_std",
        "sim.frames", "sim.lambda_anchor", "sim.lambda_clutter", "sim.emit_std",
        "sim.arena", "sim.init_objects",
        "filter.particles",
        "eval.conf_min", "eval.default_corner_std", "eval.min_track_len",
        "baseline.nms_iou", "baseline.score_min", "baseline.p_min",
        "baseline.kalman_min_hits",
        "train.label_stride", "train.neighbor_frames", "train.learning_rate",
        "train.clip_norm", "train.stage1_epochs", "train.stage2_epochs",
        "train.plateau_rel", "train.plateau_window", "train.particles",
        "bench.seeds", "bench.methods",
    };
    return keys;
}

}  // namespace

RunConfig::RunConfig() {
    // Defaults; every knob is also settable from file or --set.
    values_ = {
        {"model.lambda_death", "0.05"},
        {"model.lambda_birth", "0.2"},
        {"model.lambda_birth0", "-1"},
        {"model.alpha", "1.0"},
        {"model.num_classes", "4"},
        {"model.prior_mean", "40,40,52,49"},
        {"model.prior_std", "18,18,18,18"},
        {"model.iou_min", "0.2"},
        {"model.cluster_iou", "0.5"},
        {"model.eps_pd", "1e-6"},
        {"motion.a", "1,0,0,0,0,1,0,0,0,0,1,0,0,0,0,1"},
        {"motion.b", "0,0,0,0"},
        {"motion.log_std", "0,0,0,0"},
        {"sim.frames", "50"},
        {"sim.lambda_anchor", "2.5"},
        {"sim.lambda_clutter", "1.0"},
        {"sim.emit_std", "1.2,1.2,1.2,1.2"},
        {"sim.arena", "0,0,100,100"},
        {"sim.init_objects", "-1"},
        {"filter.particles", "200"},
        {"eval.conf_min", "0.35"},
        {"eval.default_corner_std", "1.0"},
        {"eval.min_track_len", "2"},
        {"baseline.nms_iou", "0.5"},
        {"baseline.score_min", "0.15"},
        {"baseline.p_min", "0.5"},
        {"baseline.kalman_min_hits", "2"},
        {"train.label_stride", "10"},
        {"train.neighbor_frames", "3"},
        {"train.learning_rate", "0.05"},
        {"train.clip_norm", "10"},
        {"train.stage1_epochs", "200"},
        {"train.stage2_epochs", "40"},
        {"train.plateau_rel", "1e-4"},
        {"train.plateau_window", "5"},
        {"train.particles", "64"},
        {"bench.seeds", "20"},
        {"bench.methods", "pf,single,frame-bayes,greedy,greedy-offset,kalman"},
    };
}

void RunConfig::check_key(const std::string& key) const {
    if (!known_keys().contains(key))
        throw std::runtime_error("unknown config key: " + key);
}

void RunConfig::load_file(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw std::runtime_error("cannot open config " + path);
    std::string line;
    int line_no = 0;
    while (std::getline(in, line)) {
        ++line_no;
        const auto hash = line.find('#');
        if (hash != std::string::npos) line = line.substr(0, hash);
        const auto eq = line.find('=');
        if (eq == std::string::npos) {
            if (line.find_first_not_of(" \t\r") != std::string::npos)
                throw std::runtime_error(path + ":" + std::to_string(line_no) +
                                         ": expected key = value");
            continue;
        }
        auto trim = [](std::string s) {
            const auto b = s.find_first_not_of(" \t\r");
            const auto e = s.find_last_not_of(" \t\r");
            return b == std::string::npos ? std::string() : s.substr(b, e - b + 1);
        };
        set(trim(line.substr(0, eq)), trim(line.substr(eq + 1)));
    }
}

void RunConfig::set(const std::string& key, const std::string& value) {
    check_key(key);
    values_[key] = value;
}

std::string RunConfig::get_string(const std::string& key) const {
    check_key(key);
    return values_.at(key);
}

double RunConfig::get_double(const std::string& key) const {
    const std::string s = get_string(key);
    std::size_t pos = 0;
    const double v = std::stod(s, &pos);
    if (pos != s.size()) throw std::runtime_error("config " + key + ": bad number: " + s);
    return v;
}

int RunConfig::get_int(const std::string& key) const {
    const double v = get_double(key);
    const int i = static_cast<int>(v);
    if (static_cast<double>(i) != v)
        throw std::runtime_error("config " + key + ": expected integer");
    return i;
}

std::vector<double> RunConfig::get_list(const std::string& key) const {
    const std::string s = get_string(key);
    std::vector<double> out;
    std::stringstream ss(s);
    std::string item;
    while (std::getline(ss, item, ',')) out.push_back(std::stod(item));
    return out;
}

ModelParams RunConfig::model_params() const {
    ModelParams params;
    params.lambda_death = get_double("model.lambda_death");
    params.lambda_birth = get_double("model.lambda_birth");
    params.lambda_birth0 = get_double("model.lambda_birth0");
    params.alpha = get_double("model.alpha");
    params.num_classes = get_int("model.num_classes");
    const auto mean = get_list("model.prior_mean");
    const auto std_dev = get_list("model.prior_std");
    if (mean.size() != 4 || std_dev.size() != 4)
        throw std::runtime_error("model.prior_mean/prior_std need 4 values");
    params.prior_mean = Box(mean[0], mean[1], mean[2], mean[3]);
    params.prior_cov = Mat4::Zero();
    for (int d = 0; d < 4; ++d) params.prior_cov(d, d) = std_dev[d] * std_dev[d];
    params.iou_min = get_double("model.iou_min");
    params.cluster_iou = get_double("model.cluster_iou");
    params.eps_pd = get_double("model.eps_pd");

    const auto a = get_list("motion.a");
    const auto b = get_list("motion.b");
    const auto s = get_list("motion.log_std");
    if (a.size() != 16 || b.size() != 4 || s.size() != 4)
        throw std::runtime_error("motion.a/b/log_std need 16/4/4 values");
    for (int r = 0; r < 4; ++r)
        for (int c = 0; c < 4; ++c) params.motion.A(r, c) = a[r * 4 + c];
    for (int d = 0; d < 4; ++d) {
        params.motion.b[d] = b[d];
        params.motion.log_std[d] = s[d];
    }
    params.finalize();
    return params;
}

SimConfig RunConfig::sim_config() const {
    SimConfig config;
    config.model = model_params();
    config.frames = get_int("sim.frames");
    config.lambda_anchor = get_double("sim.lambda_anchor");
    config.lambda_clutter = get_double("sim.lambda_clutter");
    const auto emit = get_list("sim.emit_std");
    if (emit.size() != 4) throw std::runtime_error("sim.emit_std needs 4 values");
    config.emit_cov = Mat4::Zero();
    for (int d = 0; d < 4; ++d) config.emit_cov(d, d) = emit[d] * emit[d];
    const auto arena = get_list("sim.arena");
    if (arena.size() != 4) throw std::runtime_error("sim.arena needs 4 values");
    config.arena = Box(arena[0], arena[1], arena[2], arena[3]);
    config.init_objects = get_int("sim.init_objects");
    return config;
}

}  // namespace bdt
