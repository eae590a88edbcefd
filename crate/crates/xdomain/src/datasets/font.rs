//! 5x7 bitmap digits.

pub const GLYPH_W: usize = 5;
pub const GLYPH_H: usize = 7;

const DIGITS: [[&str; GLYPH_H]; 10] = [
    ["01110", "10001", "10011", "10101", "11001", "10001", "01110"],
    ["00100", "01100", "00100", "00100", "00100", "00100", "01110"],
    ["01110", "10001", "00001", "00010", "00100", "01000", "11111"],
    ["11111", "00010", "00100", "00010", "00001", "10001", "01110"],
    ["00010", "00110", "01010", "10010", "11111", "00010", "00010"],
    ["11111", "10000", "11110", "00001", "00001", "10001", "01110"],
    ["00110", "01000", "10000", "11110", "10001", "10001", "01110"],
    ["11111", "00001", "00010", "00100", "01000", "01000", "01000"],
    ["01110", "10001", "10001", "01110", "10001", "10001", "01110"],
    ["01110", "10001", "10001", "01111", "00001", "00010", "01100"],
];

/// Whether cell `(col, row)` of `digit` is inked; out-of-range cells are blank.
pub fn ink(digit: usize, col: isize, row: isize) -> bool {
    if col < 0 || row < 0 || col >= GLYPH_W as isize || row >= GLYPH_H as isize {
        return false;
    }
    DIGITS[digit][row as usize].as_bytes()[col as usize] == b'1'
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn glyphs_are_distinct() {
        let bits = |d: usize| -> Vec<bool> {
            (0..GLYPH_H as isize).flat_map(|r| (0..GLYPH_W as isize).map(move |c| ink(d, c, r))).collect()
        };
        for a in 0..10 {
            for b in a + 1..10 {
                assert_ne!(bits(a), bits(b));
            }
        }
        assert!(!ink(0, -1, 0) && !ink(0, 5, 0));
    }
}
