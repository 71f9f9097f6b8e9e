//! Stable 64-bit entity identifiers.
//!
//! Labels are hashed with XXH64, a fast non-cryptographic hash with a fixed,
//! platform-independent definition, so the same label always maps to the same
//! id within and across runs. Hashes are namespaced by column name: hashing
//! "42" under column `users` and under column `products` yields different ids,
//! which keeps unrelated entity types from aliasing. Columns that should share
//! an id space must share a name.
//!
//! The top bit of the id space is reserved for virtual nodes created during
//! star expansion; hashed ids always have it cleared.

const PRIME64_1: u64 = 0x9E37_79B1_85EB_CA87;
const PRIME64_2: u64 = 0xC2B2_AE3D_27D4_EB4F;
const PRIME64_3: u64 = 0x1656_67B1_9E37_79F9;
const PRIME64_4: u64 = 0x85EB_CA77_C2B2_AE63;
const PRIME64_5: u64 = 0x27D4_EB2F_1656_67C5;

#[inline]
fn read_u64(bytes: &[u8]) -> u64 {
    u64::from_le_bytes(bytes[..8].try_into().unwrap())
}

#[inline]
fn read_u32(bytes: &[u8]) -> u32 {
    u32::from_le_bytes(bytes[..4].try_into().unwrap())
}

#[inline]
fn round(acc: u64, input: u64) -> u64 {
    acc.wrapping_add(input.wrapping_mul(PRIME64_2))
        .rotate_left(31)
        .wrapping_mul(PRIME64_1)
}

#[inline]
fn merge_round(acc: u64, val: u64) -> u64 {
    (acc ^ round(0, val))
        .wrapping_mul(PRIME64_1)
        .wrapping_add(PRIME64_4)
}

/// One-shot XXH64 over `data` with the given `seed`.
pub fn xxh64(data: &[u8], seed: u64) -> u64 {
    let mut rest = data;
    let mut h: u64;

    if rest.len() >= 32 {
        let mut v1 = seed.wrapping_add(PRIME64_1).wrapping_add(PRIME64_2);
        let mut v2 = seed.wrapping_add(PRIME64_2);
        let mut v3 = seed;
        let mut v4 = seed.wrapping_sub(PRIME64_1);
        while rest.len() >= 32 {
            v1 = round(v1, read_u64(&rest[0..8]));
            v2 = round(v2, read_u64(&rest[8..16]));
            v3 = round(v3, read_u64(&rest[16..24]));
            v4 = round(v4, read_u64(&rest[24..32]));
            rest = &rest[32..];
        }
        h = v1
            .rotate_left(1)
            .wrapping_add(v2.rotate_left(7))
            .wrapping_add(v3.rotate_left(12))
            .wrapping_add(v4.rotate_left(18));
        h = merge_round(h, v1);
        h = merge_round(h, v2);
        h = merge_round(h, v3);
        h = merge_round(h, v4);
    } else {
        h = seed.wrapping_add(PRIME64_5);
    }

    h = h.wrapping_add(data.len() as u64);

    while rest.len() >= 8 {
        h ^= round(0, read_u64(rest));
        h = h.rotate_left(27).wrapping_mul(PRIME64_1).wrapping_add(PRIME64_4);
        rest = &rest[8..];
    }
    if rest.len() >= 4 {
        h ^= (read_u32(rest) as u64).wrapping_mul(PRIME64_1);
        h = h.rotate_left(23).wrapping_mul(PRIME64_2).wrapping_add(PRIME64_3);
        rest = &rest[4..];
    }
    for &b in rest {
        h ^= (b as u64).wrapping_mul(PRIME64_5);
        h = h.rotate_left(11).wrapping_mul(PRIME64_1);
    }

    h ^= h >> 33;
    h = h.wrapping_mul(PRIME64_2);
    h ^= h >> 29;
    h = h.wrapping_mul(PRIME64_3);
    h ^= h >> 32;
    h
}

/// Stable identifier of a graph node.
///
/// Real entities live in the lower 63 bits (namespaced label hash); ids with
/// the top bit set are virtual nodes introduced by star expansion and never
/// collide with hashed entities.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct EntityId(pub u64);

const VIRTUAL_BIT: u64 = 1 << 63;

impl EntityId {
    /// Hash `label` within the id space of `namespace` (normally the column name).
    pub fn from_label(namespace: &str, label: &str) -> EntityId {
        let seed = xxh64(namespace.as_bytes(), 0);
        EntityId(xxh64(label.as_bytes(), seed) & !VIRTUAL_BIT)
    }

    /// The `n`-th virtual node of a run.
    pub fn virtual_node(n: u64) -> EntityId {
        debug_assert!(n < VIRTUAL_BIT);
        EntityId(VIRTUAL_BIT | n)
    }

    pub fn is_virtual(self) -> bool {
        self.0 & VIRTUAL_BIT != 0
    }
}

impl std::fmt::Display for EntityId {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        if self.is_virtual() {
            write!(f, "virtual:{}", self.0 & !VIRTUAL_BIT)
        } else {
            write!(f, "{:016x}", self.0)
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    // Reference vectors published with the xxHash distribution.
    #[test]
    fn xxh64_reference_vectors() {
        assert_eq!(xxh64(b"", 0), 0xef46_db37_51d8_e999);
        assert_eq!(xxh64(b"a", 0), 0xd24e_c4f1_a98c_6e5b);
        assert_eq!(xxh64(b"xxhash", 0), 0x32dd_3895_2c4b_c720);
        assert_eq!(xxh64(b"xxhash", 20141025), 0xb559_b98d_844e_0635);
        // 39 bytes: exercises the 32-byte stripe loop plus every tail branch.
        assert_eq!(
            xxh64(b"Nobody inspects the spammish repetition", 0),
            0xfbce_a83c_8a37_8bf1
        );
    }

    #[test]
    fn hashing_is_deterministic() {
        assert_eq!(
            EntityId::from_label("users", "alice"),
            EntityId::from_label("users", "alice")
        );
    }

    #[test]
    fn whitespace_is_significant() {
        assert_ne!(
            EntityId::from_label("users", "alice"),
            EntityId::from_label("users", "alice ")
        );
    }

    #[test]
    fn namespaces_do_not_alias() {
        assert_ne!(
            EntityId::from_label("users", "42"),
            EntityId::from_label("products", "42")
        );
    }

    #[test]
    fn virtual_ids_are_disjoint_from_hashes() {
        let v = EntityId::virtual_node(7);
        assert!(v.is_virtual());
        assert!(!EntityId::from_label("a", "7").is_virtual());
        assert!(v > EntityId::from_label("a", "7"));
    }

    // The Facebook page graph uses integer labels 0..22469; the chosen hash
    // must separate the whole vocabulary.
    #[test]
    fn integer_vocabulary_22470_labels_no_collisions() {
        let mut seen = std::collections::HashSet::new();
        for i in 0..22_470u32 {
            assert!(seen.insert(EntityId::from_label("node", &i.to_string())));
        }
        assert_eq!(seen.len(), 22_470);
    }
}
