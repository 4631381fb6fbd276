//! Group, pairing, hash and KDF primitives shared by every protocol variant.

mod concat;
mod identity;
mod kdf;
mod suite;
mod token;
mod transparent;

pub use concat::{concat_unambiguous, decompose};
pub use identity::{Identity, MAX_IDENTITY_LEN};
pub use kdf::{kdf, KdfParams, KdfProfile, MAX_KDF_COST, MIN_PRODUCTION_COST};
pub use suite::{
    GroupSuite, Scalar, Slot, SourcePoint, SuiteId, TargetElement, G1_LEN, G2_LEN, GT_LEN, HASH_TO_GROUP_ATTEMPTS,
    TRANSPARENT_LEN,
};
pub use token::{
    h2, is_hex64, ordered_h2, AugmentedToken, TuplePair, H2_DOMAIN_TAG, TOKEN_BITS, TOKEN_BYTES, TOKEN_HEX_LEN,
};
pub use transparent::{is_prime, TransparentGroup, LARGE_TEST_PRIME};
