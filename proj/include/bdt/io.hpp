#pragma once

#include "bdt/filter.hpp"
#include "bdt/metrics.hpp"
#include "bdt/simulator.hpp"
#include "bdt/types.hpp"

#include <map>
#include <string>
#include <vector>

namespace bdt {

// JSONL schemas. First line is a header record carrying the schema name
// and version; each further line is one frame.
//   anchors: {"frame":t,"anchors":[{"box":[4],"e":x,"k":[K]}]}
//   tracks:  {"frame":t,"objects":[{"id":i,"box":[4],"class":c,"conf":x,"cov":[16]?}]}

void write_anchors(const std::string& path, std::span<const FrameObservations> frames,
                   int num_classes, bool force);
std::vector<FrameObservations> read_anchors(const std::string& path, int* num_classes);

void write_tracks(const std::string& path, const TrackOutput& tracks,
                  const std::string& method, bool force);
TrackOutput read_tracks(const std::string& path, std::string* method);

/// Truth files use the tracks schema with method "truth" and conf 1.
void write_truth(const std::string& path, std::span<const std::vector<ObjectState>> truth,
                 bool force);
std::vector<FrameTruth> read_truth(const std::string& path);

/// Flat dotted-key configuration. Values are scalars or comma-separated
/// number lists; '#' starts a comment. Unknown keys are rejected.
class RunConfig {
public:
    RunConfig();

    void load_file(const std::string& path);
    void set(const std::string& key, const std::string& value);

    double get_double(const std::string& key) const;
    int get_int(const std::string& key) const;
    std::string get_string(const std::string& key) const;
    std::vector<double> get_list(const std::string& key) const;

    ModelParams model_params() const;
    SimConfig sim_config() const;

    const std::map<std::string, std::string>& values() const { return values_; }

private:
    void check_key(const std::string& key) const;
    std::map<std::string, std::string> values_;
};

}  // namespace bdt
