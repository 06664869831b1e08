#pragma once

// Flat key=value run settings. Built-in defaults carry the pipeline
// constants; a config file and then command-line flags override them.
// Unknown keys are rejected.

#include "covit/phantom.hpp"
#include "covit/preproc.hpp"
#include "covit/trainer.hpp"
#include "covit/vit.hpp"

#include <filesystem>
#include <map>
#include <string>
#include <vector>

namespace covit {

struct ConfigKey {
    std::string name;
    std::string default_value;
    std::string help;
};

class RunConfig {
public:
    RunConfig();

    static const std::vector<ConfigKey>& keys();

    // Lines `key = value`; blank lines and `#` comments are ignored.
    void load_file(const std::filesystem::path& path);
    void load_text(const std::string& text, const std::string& origin = "<text>");
    void set(const std::string& key, const std::string& value);
    // `key=value`
    void set_pair(const std::string& assignment);

    const std::string& get(const std::string& key) const;
    double get_double(const std::string& key) const;
    std::uint64_t get_uint(const std::string& key) const;
    bool get_bool(const std::string& key) const;
    std::vector<double> get_list(const std::string& key) const;

    // Sorted `key=value` lines of every setting.
    std::string resolved_text() const;

    ModelConfig model() const;
    TrainConfig train() const;
    PreprocConfig preproc() const;
    PhantomSpec phantom() const;
    unsigned threads() const;

private:
    std::map<std::string, std::string> values_;
};

}  // namespace covit
