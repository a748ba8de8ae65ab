//! Words in the left-invariant frames of SU(2), the CR spheres S^{2d+1}, and
//! the Heisenberg groups H^{2d+1}, with the anisotropic degree that weights
//! horizontal letters 1 and vertical (Reeb) letters 2.

use std::fmt;

use crate::error::{KernelError, Result};

/// The group a word's letters live on.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Space {
    Su2,
    /// S^{2d+1} with its CR frame T₀ (vertical), T₁..T_d.
    Sphere { d: usize },
    /// H^{2d+1} with real frame 𝒳ⱼ, 𝒴ⱼ, 𝒵₀ and complex combinations
    /// 𝒵ⱼ = ½(𝒴ⱼ − i𝒳ⱼ), 𝒵̄ⱼ.
    Heisenberg { d: usize },
}

impl Space {
    fn complex_dim(self) -> usize {
        match self {
            Space::Su2 => 1,
            Space::Sphere { d } | Space::Heisenberg { d } => d,
        }
    }
}

/// A single frame letter.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub enum Letter {
    /// SU(2) horizontal frames and the vertical Z.
    X,
    Y,
    Z,
    /// Sphere letter Tⱼ; j = 0 is the vertical Reeb direction.
    T(usize),
    /// Heisenberg real horizontal 𝒳ⱼ (1-based).
    HeisX(usize),
    /// Heisenberg real horizontal 𝒴ⱼ (1-based).
    HeisY(usize),
    /// Heisenberg vertical 𝒵₀ = ∂z.
    HeisZ0,
    /// Complex 𝒵ⱼ = ½(𝒴ⱼ − i𝒳ⱼ) (1-based).
    HeisZc(usize),
    /// Complex conjugate 𝒵̄ⱼ (1-based).
    HeisZcBar(usize),
}

impl Letter {
    /// Anisotropic weight: 1 for horizontal letters, 2 for vertical ones.
    pub fn weight(self) -> usize {
        match self {
            Letter::Z | Letter::T(0) | Letter::HeisZ0 => 2,
            _ => 1,
        }
    }

    fn valid_on(self, space: Space) -> bool {
        let d = space.complex_dim();
        match (space, self) {
            (Space::Su2, Letter::X | Letter::Y | Letter::Z) => true,
            (Space::Sphere { .. }, Letter::T(j)) => j <= d,
            (Space::Heisenberg { .. }, Letter::HeisZ0) => true,
            (
                Space::Heisenberg { .. },
                Letter::HeisX(j) | Letter::HeisY(j) | Letter::HeisZc(j) | Letter::HeisZcBar(j),
            ) => (1..=d).contains(&j),
            _ => false,
        }
    }
}

impl fmt::Display for Letter {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Letter::X => write!(f, "X"),
            Letter::Y => write!(f, "Y"),
            Letter::Z => write!(f, "Z"),
            Letter::T(j) => write!(f, "T{j}"),
            Letter::HeisX(j) => write!(f, "X{j}"),
            Letter::HeisY(j) => write!(f, "Y{j}"),
            Letter::HeisZ0 => write!(f, "Z0"),
            Letter::HeisZc(j) => write!(f, "Z{j}"),
            Letter::HeisZcBar(j) => write!(f, "ZB{j}"),
        }
    }
}

/// An ordered word ξ = (ξ₁,…,ξₖ) of frame letters on a fixed space.
///
/// In Hermite functions the rightmost letter acts on the kernel first.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct LieWord {
    space: Space,
    letters: Vec<Letter>,
}

impl LieWord {
    pub fn new(space: Space, letters: Vec<Letter>) -> Result<Self> {
        if let Space::Sphere { d } | Space::Heisenberg { d } = space {
            if d == 0 {
                return Err(KernelError::Domain("dimension d must be at least 1".into()));
            }
        }
        for &l in &letters {
            if !l.valid_on(space) {
                return Err(KernelError::Domain(format!(
                    "letter {l} is not in the {space:?} alphabet"
                )));
            }
        }
        Ok(LieWord { space, letters })
    }

    pub fn empty(space: Space) -> Self {
        LieWord {
            space,
            letters: Vec::new(),
        }
    }

    pub fn space(&self) -> Space {
        self.space
    }

    pub fn letters(&self) -> &[Letter] {
        &self.letters
    }

    pub fn len(&self) -> usize {
        self.letters.len()
    }

    pub fn is_empty(&self) -> bool {
        self.letters.is_empty()
    }

    /// Parses a comma-separated word like `"X,Y"`, `"T1,T0"`, or `"Z1,Z0"`.
    /// An empty (or all-whitespace) string is the empty word.
    pub fn parse(space: Space, text: &str) -> Result<Self> {
        let mut letters = Vec::new();
        for raw in text.split(',') {
            let tok = raw.trim();
            if tok.is_empty() {
                continue;
            }
            letters.push(parse_letter(space, tok)?);
        }
        LieWord::new(space, letters)
    }
}

fn parse_index(tok: &str, rest: &str) -> Result<usize> {
    rest.parse::<usize>()
        .map_err(|_| KernelError::Domain(format!("cannot parse frame index in letter '{tok}'")))
}

fn parse_letter(space: Space, tok: &str) -> Result<Letter> {
    let letter = match space {
        Space::Su2 => match tok {
            "X" | "x" => Letter::X,
            "Y" | "y" => Letter::Y,
            "Z" | "z" => Letter::Z,
            _ => {
                return Err(KernelError::Domain(format!(
                    "unknown SU(2) letter '{tok}' (expected X, Y, or Z)"
                )))
            }
        },
        Space::Sphere { .. } => {
            let rest = tok
                .strip_prefix('T')
                .or_else(|| tok.strip_prefix('t'))
                .ok_or_else(|| {
                    KernelError::Domain(format!("unknown sphere letter '{tok}' (expected T0..Td)"))
                })?;
            Letter::T(parse_index(tok, rest)?)
        }
        Space::Heisenberg { .. } => {
            if let Some(rest) = tok.strip_prefix("ZB").or_else(|| tok.strip_prefix("zb")) {
                Letter::HeisZcBar(parse_index(tok, rest)?)
            } else if let Some(rest) = tok.strip_prefix('X').or_else(|| tok.strip_prefix('x')) {
                Letter::HeisX(parse_index(tok, rest)?)
            } else if let Some(rest) = tok.strip_prefix('Y').or_else(|| tok.strip_prefix('y')) {
                Letter::HeisY(parse_index(tok, rest)?)
            } else if let Some(rest) = tok.strip_prefix('Z').or_else(|| tok.strip_prefix('z')) {
                let j = parse_index(tok, rest)?;
                if j == 0 {
                    Letter::HeisZ0
                } else {
                    Letter::HeisZc(j)
                }
            } else {
                return Err(KernelError::Domain(format!(
                    "unknown Heisenberg letter '{tok}' (expected Xj, Yj, Z0, Zj, or ZBj)"
                )));
            }
        }
    };
    if !letter.valid_on(space) {
        return Err(KernelError::Domain(format!(
            "letter {letter} is out of range for {space:?}"
        )));
    }
    Ok(letter)
}

impl fmt::Display for LieWord {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let mut first = true;
        for l in &self.letters {
            if !first {
                write!(f, ",")?;
            }
            write!(f, "{l}")?;
            first = false;
        }
        Ok(())
    }
}

/// |ξ| = #horizontal letters + 2·#vertical letters.
pub fn word_degree(word: &LieWord) -> usize {
    word.letters.iter().map(|l| l.weight()).sum()
}

/// The frame correspondence X ↦ 𝒳₁, Y ↦ 𝒴₁, Z ↦ 𝒵₀ from SU(2) words to
/// words on the 3-dimensional Heisenberg group. Preserves the degree.
pub fn beta_map(word: &LieWord) -> Result<LieWord> {
    if word.space != Space::Su2 {
        return Err(KernelError::Domain(
            "beta_map is defined on SU(2) words".into(),
        ));
    }
    let letters = word
        .letters
        .iter()
        .map(|l| match l {
            Letter::X => Letter::HeisX(1),
            Letter::Y => Letter::HeisY(1),
            Letter::Z => Letter::HeisZ0,
            _ => unreachable!(),
        })
        .collect();
    LieWord::new(Space::Heisenberg { d: 1 }, letters)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn degree_counts_vertical_letters_twice() {
        let w = LieWord::new(Space::Su2, vec![Letter::X, Letter::Y]).unwrap();
        assert_eq!(word_degree(&w), 2);
        let w = LieWord::new(Space::Su2, vec![Letter::Z]).unwrap();
        assert_eq!(word_degree(&w), 2);
        let w = LieWord::new(Space::Su2, vec![Letter::X, Letter::Z, Letter::Y]).unwrap();
        assert_eq!(word_degree(&w), 4);
        let w = LieWord::new(Space::Sphere { d: 2 }, vec![Letter::T(1), Letter::T(0)]).unwrap();
        assert_eq!(word_degree(&w), 3);
        assert_eq!(word_degree(&LieWord::empty(Space::Su2)), 0);
    }

    #[test]
    fn degree_is_additive_under_concatenation() {
        let a = LieWord::new(Space::Su2, vec![Letter::X, Letter::Z]).unwrap();
        let b = LieWord::new(Space::Su2, vec![Letter::Y]).unwrap();
        let mut cat = a.letters().to_vec();
        cat.extend_from_slice(b.letters());
        let joined = LieWord::new(Space::Su2, cat).unwrap();
        assert_eq!(word_degree(&joined), word_degree(&a) + word_degree(&b));
    }

    #[test]
    fn beta_preserves_degree_and_maps_letters() {
        let w = LieWord::new(Space::Su2, vec![Letter::X, Letter::Z, Letter::Y]).unwrap();
        let h = beta_map(&w).unwrap();
        assert_eq!(word_degree(&h), word_degree(&w));
        assert_eq!(
            h.letters(),
            &[Letter::HeisX(1), Letter::HeisZ0, Letter::HeisY(1)]
        );
        assert_eq!(h.space(), Space::Heisenberg { d: 1 });
    }

    #[test]
    fn alphabet_mismatch_is_rejected() {
        assert!(LieWord::new(Space::Su2, vec![Letter::T(1)]).is_err());
        assert!(LieWord::new(Space::Sphere { d: 2 }, vec![Letter::T(3)]).is_err());
        assert!(LieWord::new(Space::Heisenberg { d: 1 }, vec![Letter::HeisX(2)]).is_err());
        assert!(LieWord::new(Space::Heisenberg { d: 1 }, vec![Letter::X]).is_err());
    }

    #[test]
    fn parse_round_trips_display() {
        let cases = [
            (Space::Su2, "X,Y,Z"),
            (Space::Sphere { d: 2 }, "T1,T0,T2"),
            (Space::Heisenberg { d: 2 }, "X1,Y2,Z0"),
            (Space::Heisenberg { d: 2 }, "Z1,ZB2,Z0"),
        ];
        for (space, text) in cases {
            let w = LieWord::parse(space, text).unwrap();
            assert_eq!(w.to_string(), text);
        }
        assert!(LieWord::parse(Space::Su2, "").unwrap().is_empty());
        assert!(LieWord::parse(Space::Su2, "Q").is_err());
        assert!(LieWord::parse(Space::Sphere { d: 1 }, "T2").is_err());
    }
}
