#pragma once

// OCC link layer: LED-ID packet framing, OOK/Manchester for fixed lights,
// S2-PSK for taillight/street-light pairs, frame sampling, and BER-driven
// corruption.
//
// Wire format (bit-exact, MSB first):
//   preamble 0xA6 (8 bits, sent raw)
//   class tag (2 bits: 00 indoor, 01 street light, 10 vehicle)
//   id (16 bits)
//   payload: indoor 32 bits (x_mm u16, y_mm u16)
//            street light 40 bits (height_mm u16, spacing_mm u16, side u8)
//            vehicle 24 bits (area_mm2 u16, flags u8)
//   CRC-8 poly 0x07, init 0x00, over tag+id+payload bits

#include <algorithm>
#include <array>
#include <cmath>
#include <cstdint>
#include <optional>
#include <random>
#include <variant>
#include <vector>

#include "occ/errors.hpp"

namespace occ {

enum class PacketClass : uint8_t { indoor = 0, street_light = 1, vehicle = 2 };

struct IndoorPayload {
    uint16_t x_mm = 0;
    uint16_t y_mm = 0;
    bool operator==(const IndoorPayload&) const = default;
};

struct StreetLightPayload {
    uint16_t height_mm = 0;
    uint16_t spacing_mm = 0;
    uint8_t side = 0;  // 0 right, 1 left
    bool operator==(const StreetLightPayload&) const = default;
};

struct VehiclePayload {
    uint16_t area_mm2 = 0;
    uint8_t flags = 0;
    bool operator==(const VehiclePayload&) const = default;
};

struct LedIdPacket {
    uint16_t id = 0;
    std::variant<IndoorPayload, StreetLightPayload, VehiclePayload> payload{
        IndoorPayload{}};

    PacketClass packet_class() const {
        return static_cast<PacketClass>(payload.index());
    }
    bool operator==(const LedIdPacket&) const = default;
};

using BitVec = std::vector<uint8_t>;

inline constexpr std::array<uint8_t, 8> kPreambleBits = {1, 0, 1, 0, 0, 1, 1, 0};

/// CRC-8 (poly 0x07, init 0x00, no reflection) over an arbitrary bit sequence.
inline uint8_t crc8_bits(const BitVec& bits) {
    uint8_t crc = 0;
    for (uint8_t bit : bits) {
        const uint8_t fed = static_cast<uint8_t>((crc >> 7) ^ (bit & 1));
        crc = static_cast<uint8_t>(crc << 1);
        if (fed) crc ^= 0x07;
    }
    return crc;
}

namespace detail {

inline void push_bits(BitVec& out, uint32_t value, int nbits) {
    for (int i = nbits - 1; i >= 0; --i)
        out.push_back(static_cast<uint8_t>((value >> i) & 1));
}

inline uint32_t pull_bits(const BitVec& bits, size_t& pos, int nbits) {
    uint32_t v = 0;
    for (int i = 0; i < nbits; ++i) v = (v << 1) | bits[pos++];
    return v;
}

}  // namespace detail

/// tag + id + payload + crc as bits (preamble not included).
inline BitVec pack_bits(const LedIdPacket& pkt) {
    BitVec body;
    detail::push_bits(body, static_cast<uint32_t>(pkt.packet_class()), 2);
    detail::push_bits(body, pkt.id, 16);
    if (const auto* p = std::get_if<IndoorPayload>(&pkt.payload)) {
        detail::push_bits(body, p->x_mm, 16);
        detail::push_bits(body, p->y_mm, 16);
    } else if (const auto* s = std::get_if<StreetLightPayload>(&pkt.payload)) {
        detail::push_bits(body, s->height_mm, 16);
        detail::push_bits(body, s->spacing_mm, 16);
        detail::push_bits(body, s->side, 8);
    } else {
        const auto& v = std::get<VehiclePayload>(pkt.payload);
        detail::push_bits(body, v.area_mm2, 16);
        detail::push_bits(body, v.flags, 8);
    }
    detail::push_bits(body, crc8_bits(body), 8);
    return body;
}

inline int payload_bit_count(PacketClass cls) {
    switch (cls) {
        case PacketClass::indoor: return 32;
        case PacketClass::street_light: return 40;
        case PacketClass::vehicle: return 24;
    }
    return 0;
}

/// Parses tag..crc bits; nullopt on bad tag, short input, or CRC mismatch.
inline std::optional<LedIdPacket> parse_bits(const BitVec& bits) {
    if (bits.size() < 26) return std::nullopt;
    size_t pos = 0;
    const uint32_t tag = detail::pull_bits(bits, pos, 2);
    if (tag > 2) return std::nullopt;
    const auto cls = static_cast<PacketClass>(tag);
    const size_t body_bits = 2 + 16 + payload_bit_count(cls);
    if (bits.size() < body_bits + 8) return std::nullopt;

    LedIdPacket pkt;
    pkt.id = static_cast<uint16_t>(detail::pull_bits(bits, pos, 16));
    switch (cls) {
        case PacketClass::indoor: {
            IndoorPayload p;
            p.x_mm = static_cast<uint16_t>(detail::pull_bits(bits, pos, 16));
            p.y_mm = static_cast<uint16_t>(detail::pull_bits(bits, pos, 16));
            pkt.payload = p;
            break;
        }
        case PacketClass::street_light: {
            StreetLightPayload p;
            p.height_mm = static_cast<uint16_t>(detail::pull_bits(bits, pos, 16));
            p.spacing_mm = static_cast<uint16_t>(detail::pull_bits(bits, pos, 16));
            p.side = static_cast<uint8_t>(detail::pull_bits(bits, pos, 8));
            pkt.payload = p;
            break;
        }
        case PacketClass::vehicle: {
            VehiclePayload p;
            p.area_mm2 = static_cast<uint16_t>(detail::pull_bits(bits, pos, 16));
            p.flags = static_cast<uint8_t>(detail::pull_bits(bits, pos, 8));
            pkt.payload = p;
            break;
        }
    }
    const uint8_t crc = static_cast<uint8_t>(detail::pull_bits(bits, pos, 8));
    BitVec body(bits.begin(), bits.begin() + static_cast<long>(body_bits));
    if (crc != crc8_bits(body)) return std::nullopt;
    return pkt;
}

/// Per-LED on/off states at a fixed symbol clock. For S2-PSK both sequences
/// are populated and hold one complementary pair per sample instant.
struct SymbolStream {
    double clock_hz = 125.0;
    std::vector<uint8_t> s1;
    std::vector<uint8_t> s2;  // empty for single-LED OOK streams
    bool paired() const { return !s2.empty(); }
};

/// Manchester/OOK framing: 8 raw preamble symbols, then each bit as a symbol
/// pair (1 -> HIGH,LOW; 0 -> LOW,HIGH).
inline SymbolStream encode_ook_manchester(const LedIdPacket& pkt,
                                          double clock_hz = 125.0) {
    SymbolStream out;
    out.clock_hz = clock_hz;
    out.s1.assign(kPreambleBits.begin(), kPreambleBits.end());
    for (uint8_t bit : pack_bits(pkt)) {
        out.s1.push_back(bit);
        out.s1.push_back(static_cast<uint8_t>(1 - bit));
    }
    return out;
}

/// S2-PSK pair states for one data bit at time t within the square-wave
/// period T: s1 is HIGH for the first half-period; s2 matches s1 for bit 0
/// and opposes it for bit 1.
inline std::pair<uint8_t, uint8_t> s2psk_states(int bit, double t, double period) {
    const double phase = std::fmod(t, period);
    const uint8_t s1 = phase < period / 2 ? 1 : 0;
    const uint8_t s2 = bit ? static_cast<uint8_t>(1 - s1) : s1;
    return {s1, s2};
}

/// Eq-level demodulation: the bit is the XOR of the sampled pair states.
inline int s2psk_demod(uint8_t s1_sample, uint8_t s2_sample) {
    return (s1_sample ^ s2_sample) & 1;
}

/// Residual BER of the XOR classifier: 2*q*(1-q) with q = delta * p_e.
inline double s2psk_ber(double delta, double p_e) {
    const double q = delta * p_e;
    if (q < 0.0 || q > 1.0) throw Error("s2psk_ber: delta*p_e outside [0, 1]");
    return 2.0 * q * (1.0 - q);
}

/// One bit per square-wave period, two symbols per LED per bit.
inline SymbolStream encode_s2psk(const LedIdPacket& pkt, double clock_hz = 125.0) {
    SymbolStream out;
    out.clock_hz = clock_hz;
    BitVec bits(kPreambleBits.begin(), kPreambleBits.end());
    const BitVec body = pack_bits(pkt);
    bits.insert(bits.end(), body.begin(), body.end());
    const double period = 2.0 / clock_hz;  // two symbols per bit
    for (size_t k = 0; k < bits.size(); ++k) {
        for (int half = 0; half < 2; ++half) {
            const double t = (2 * k + half + 0.5) / clock_hz;
            const auto [a, b] = s2psk_states(bits[k], t - 2 * k / clock_hz, period);
            out.s1.push_back(a);
            out.s2.push_back(b);
        }
    }
    return out;
}

struct FrameSample {
    uint8_t s1 = 0;
    uint8_t s2 = 0;
    bool low_confidence = false;
};

/// Fraction of a symbol period the exposure may cover before the sample is
/// flagged as motion-blurred (feeds the exposure/error trend).
inline constexpr double kBlurSymbolFraction = 0.5;

/// Extra relative pixel-count noise from motion blur once the exposure spans
/// more than the blur fraction of a symbol.
inline double blur_extra_sigma(double exposure, double clock_hz) {
    const double spanned = exposure * clock_hz;
    return 0.01 * std::max(0.0, spanned - kBlurSymbolFraction);
}

inline std::optional<size_t> find_preamble(const std::vector<uint8_t>& states,
                                           size_t window) {
    if (states.size() < kPreambleBits.size()) return std::nullopt;
    const size_t last = std::min(window, states.size() - kPreambleBits.size());
    for (size_t start = 0; start <= last; ++start) {
        bool ok = true;
        for (size_t i = 0; i < kPreambleBits.size(); ++i)
            if (states[start + i] != kPreambleBits[i]) {
                ok = false;
                break;
            }
        if (ok) return start;
    }
    return std::nullopt;
}

/// Samples the LED state(s) once per camera frame at the frame midpoint.
/// Exposure longer than kBlurSymbolFraction of a symbol flags the sample.
/// Throws SyncLost when sync_window > 0 and no preamble shows up among the
/// sampled states within that window.
inline std::vector<FrameSample> sample_frames(const SymbolStream& stream,
                                              double fps, double exposure,
                                              size_t n_frames,
                                              size_t sync_window = 16) {
    if (!(fps > 0)) throw Error("sample_frames: fps must be > 0");
    if (stream.clock_hz < fps)
        throw Error("sample_frames: stream clock below frame rate");
    const bool blurred = exposure > kBlurSymbolFraction / stream.clock_hz;
    std::vector<FrameSample> samples;
    samples.reserve(n_frames);
    std::vector<uint8_t> s1_states;
    for (size_t k = 0; k < n_frames; ++k) {
        const double t_mid = (static_cast<double>(k) + 0.5) / fps;
        const size_t idx = static_cast<size_t>(t_mid * stream.clock_hz);
        if (idx >= stream.s1.size()) break;
        FrameSample s;
        s.s1 = stream.s1[idx];
        s.s2 = stream.paired() ? stream.s2[idx] : 0;
        s.low_confidence = blurred;
        samples.push_back(s);
        s1_states.push_back(s.s1);
    }
    if (sync_window > 0 && !find_preamble(s1_states, sync_window))
        throw SyncLost("sample_frames: preamble not found in sync window");
    return samples;
}

/// Manchester decode of per-frame states: locate the preamble, regroup symbol
/// pairs into bits, reject pair violations and CRC failures.
inline std::optional<LedIdPacket> decode_ook_manchester(
    const std::vector<uint8_t>& states, size_t sync_window = 16) {
    const auto start = find_preamble(states, sync_window);
    if (!start) return std::nullopt;
    BitVec bits;
    for (size_t i = *start + kPreambleBits.size(); i + 1 < states.size(); i += 2) {
        const uint8_t a = states[i], b = states[i + 1];
        if (a == b) return std::nullopt;  // Manchester violation
        bits.push_back(a);
    }
    return parse_bits(bits);
}

struct CorruptionStats {
    long flipped = 0;
    long total = 0;
};

/// Flips each sampled state independently with probability p_e, then decodes.
/// Deterministic for a given (states, p_e, rng state).
inline std::optional<LedIdPacket> corrupt_and_decode(
    const std::vector<uint8_t>& states, double p_e, std::mt19937_64& rng,
    CorruptionStats* stats = nullptr) {
    std::uniform_real_distribution<double> unit(0.0, 1.0);
    std::vector<uint8_t> noisy(states);
    for (auto& s : noisy)
        if (unit(rng) < p_e) {
            s ^= 1;
            if (stats) stats->flipped += 1;
        }
    if (stats) stats->total += static_cast<long>(noisy.size());
    return decode_ook_manchester(noisy);
}

/// S2-PSK pipeline: flip each LED state independently with probability q
/// (q = delta * p_e), demodulate by XOR, then parse preamble + body bits.
/// Each bit occupies two symbol samples; the first of each pair is used.
inline std::optional<LedIdPacket> s2psk_corrupt_and_decode(
    const SymbolStream& stream, double q, std::mt19937_64& rng,
    size_t sync_window = 16, CorruptionStats* stats = nullptr) {
    std::uniform_real_distribution<double> unit(0.0, 1.0);
    std::vector<uint8_t> bits;
    for (size_t i = 0; i + 1 < stream.s1.size(); i += 2) {
        uint8_t a = stream.s1[i], b = stream.s2[i];
        if (unit(rng) < q) {
            a ^= 1;
            if (stats) stats->flipped += 1;
        }
        if (unit(rng) < q) {
            b ^= 1;
            if (stats) stats->flipped += 1;
        }
        if (stats) stats->total += 2;
        bits.push_back(static_cast<uint8_t>(s2psk_demod(a, b)));
    }
    const auto start = find_preamble(bits, sync_window);
    if (!start) return std::nullopt;
    BitVec body(bits.begin() + static_cast<long>(*start + kPreambleBits.size()),
                bits.end());
    return parse_bits(body);
}

}  // namespace occ
