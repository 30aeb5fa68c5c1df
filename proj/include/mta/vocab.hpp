#pragma once

#include <string>
#include <unordered_map>
#include <vector>

#include <json.hpp>

#include "mta/errors.hpp"

namespace mta {

// Ordered touchpoint labels plus the touchpoint -> channel grouping.
class Vocabulary {
public:
    Vocabulary() = default;

    // pairs of (touchpoint name, channel name), in declared order
    explicit Vocabulary(const std::vector<std::pair<std::string, std::string>>& entries) {
        for (const auto& [name, channel] : entries) add(name, channel);
    }

    void add(const std::string& name, const std::string& channel) {
        if (index_.count(name)) throw ConfigError("duplicate touchpoint name: " + name);
        index_[name] = names_.size();
        names_.push_back(name);
        std::size_t c = 0;
        for (; c < channels_.size(); ++c)
            if (channels_[c] == channel) break;
        if (c == channels_.size()) channels_.push_back(channel);
        channel_idx_.push_back(c);
    }

    std::size_t size() const { return names_.size(); }
    const std::vector<std::string>& names() const { return names_; }
    const std::vector<std::string>& channels() const { return channels_; }

    const std::string& name(std::size_t tp) const { return names_.at(tp); }
    std::size_t channel_index(std::size_t tp) const { return channel_idx_.at(tp); }
    const std::string& channel_of(std::size_t tp) const { return channels_[channel_idx_.at(tp)]; }

    bool contains(const std::string& name) const { return index_.count(name) != 0; }

    std::size_t index_of(const std::string& name) const {
        auto it = index_.find(name);
        if (it == index_.end()) throw DataError("unknown touchpoint: " + name);
        return it->second;
    }

    bool operator==(const Vocabulary& o) const {
        return names_ == o.names_ && channels_ == o.channels_ && channel_idx_ == o.channel_idx_;
    }

    // The six touchpoints used throughout: display click/impression, email
    // click/open/sent, paid search, grouped into three channels.
    static Vocabulary standard() {
        return Vocabulary({{"DC", "display"},
                           {"DI", "display"},
                           {"EC", "email"},
                           {"EO", "email"},
                           {"ES", "email"},
                           {"PS", "paidsearch"}});
    }

    nlohmann::ordered_json to_json() const {
        nlohmann::ordered_json tps = nlohmann::ordered_json::array();
        for (std::size_t i = 0; i < names_.size(); ++i)
            tps.push_back({{"name", names_[i]}, {"channel", channel_of(i)}});
        return {{"touchpoints", tps}};
    }

    static Vocabulary from_json(const nlohmann::json& j) {
        Vocabulary v;
        for (const auto& tp : j.at("touchpoints"))
            v.add(tp.at("name").get<std::string>(), tp.at("channel").get<std::string>());
        if (v.size() == 0) throw ConfigError("vocabulary has no touchpoints");
        return v;
    }

private:
    std::vector<std::string> names_;
    std::vector<std::string> channels_;
    std::vector<std::size_t> channel_idx_;
    std::unordered_map<std::string, std::size_t> index_;
};

} // namespace mta
