#pragma once

#include <string>
#include <vector>

namespace ijat {

// An anchor adjective with one synonym and one antonym. Sentence pairs built
// from these probe whether opposite adjectives attract negative attribution.
struct AdjectiveTriplet {
    std::string anchor;
    std::string synonym;
    std::string opposite;
};

// Bundled default triplet set used by the adjective probe and the synthetic
// corpus generator.
inline const std::vector<AdjectiveTriplet>& adjective_triplets() {
    static const std::vector<AdjectiveTriplet> triplets = {
        {"beautiful", "pretty", "ugly"},
        {"ugly", "hideous", "beautiful"},
        {"small", "little", "big"},
        {"big", "huge", "small"},
        {"gigantic", "enormous", "tiny"},
        {"tiny", "minuscule", "enormous"},
        {"old", "elderly", "young"},
        {"young", "youthful", "old"},
        {"difficult", "hard", "easy"},
        {"simple", "easy", "difficult"},
        {"thorough", "comprehensive", "erroneous"},
        {"faulty", "erroneous", "thorough"},
        {"dirty", "messy", "clean"},
        {"clean", "tidy", "dirty"},
        {"heavy", "massive", "light"},
        {"common", "normal", "unusual"},
        {"untypical", "unusual", "normal"},
        {"boring", "dull", "interesting"},
        {"exciting", "interesting", "boring"},
        {"calm", "peaceful", "hectic"},
        {"chaotic", "hectic", "calm"},
        {"balanced", "equal", "uneven"},
        {"unequal", "uneven", "balanced"},
    };
    return triplets;
}

}  // namespace ijat
