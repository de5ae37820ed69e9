//! Modular arithmetic, negacyclic NTT and RNS polynomials.

mod baseconv;
mod modulus;
mod ntt;
mod poly;
pub mod sample;

pub use baseconv::{BaseConverter, CrtReconstructor};
pub use modulus::{is_prime, ntt_primes_below, ntt_primes_near, Modulus, MAX_MODULUS_BITS};
pub use ntt::{bit_reverse, negacyclic_mul, negacyclic_schoolbook, TwiddleTable};
pub use poly::{galois_permutation, Domain, RnsBasis, RnsPoly};

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
pub enum ArithError {
    #[error("modulus {0} is outside [3, 2^62)")]
    ModulusOutOfRange(u64),
    #[error("{0} is not prime")]
    NotPrime(u64),
    #[error("duplicate modulus {0} in basis")]
    DuplicateModulus(u64),
    #[error("{value} has no inverse modulo {modulus}")]
    NotInvertible { value: u64, modulus: u64 },
    #[error("no primitive 2N-th root of unity modulo {modulus} for N = {degree}")]
    MissingTwiddle { modulus: u64, degree: usize },
    #[error("ring degree {0} is not a power of two >= 2")]
    BadDegree(usize),
    #[error("expected {expected:?} domain, found {found:?}")]
    WrongDomain { expected: Domain, found: Domain },
    #[error("operands live over different RNS bases")]
    BasisMismatch,
    #[error("empty RNS basis")]
    EmptyBasis,
    #[error("residue not reduced modulo {0}")]
    UnreducedResidue(u64),
    #[error("not enough NTT-friendly primes near {bound} for N = {degree}")]
    PrimeSearchExhausted { bound: u64, degree: usize },
}
