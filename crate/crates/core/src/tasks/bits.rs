//! Grade-school arithmetic on MSB-first bit vectors (values 0/1). These are
//! the production oracles for the arithmetic tasks and work at any length;
//! the big-integer cross-checks live in the check suites.

/// a + b, MSB-first, padded with leading zeros to `out_len`.
pub fn add_bits(a: &[u32], b: &[u32], out_len: usize) -> Vec<u32> {
    let mut out = vec![0u32; out_len];
    let mut carry = 0u32;
    for i in 0..out_len {
        let av = if i < a.len() { a[a.len() - 1 - i] } else { 0 };
        let bv = if i < b.len() { b[b.len() - 1 - i] } else { 0 };
        let s = av + bv + carry;
        out[out_len - 1 - i] = s & 1;
        carry = s >> 1;
    }
    debug_assert_eq!(carry, 0, "sum does not fit in {out_len} bits");
    out
}

/// a * b via shift-and-add, MSB-first, padded to `out_len`.
pub fn mul_bits(a: &[u32], b: &[u32], out_len: usize) -> Vec<u32> {
    // Accumulate LSB-first to keep the carries local.
    let mut acc = vec![0u32; out_len];
    for (shift, &bv) in b.iter().rev().enumerate() {
        if bv == 0 {
            continue;
        }
        let mut carry = 0u32;
        for (i, &av) in a.iter().rev().enumerate() {
            let pos = shift + i;
            if pos >= out_len {
                debug_assert_eq!(av, 0);
                continue;
            }
            let s = acc[pos] + av + carry;
            acc[pos] = s & 1;
            carry = s >> 1;
        }
        let mut pos = shift + a.len();
        while carry > 0 && pos < out_len {
            let s = acc[pos] + carry;
            acc[pos] = s & 1;
            carry = s >> 1;
            pos += 1;
        }
        debug_assert_eq!(carry, 0, "product does not fit in {out_len} bits");
    }
    acc.reverse();
    acc
}

/// floor(sqrt(n)) for an MSB-first bit string of length l, returned with
/// exactly ceil(l/2) bits. Digit-by-digit: per input bit pair, the remainder
/// picks up two bits and the trial subtrahend is (result << 2) | 1.
pub fn isqrt_bits(n: &[u32]) -> Vec<u32> {
    let out_len = n.len().div_ceil(2);
    // Pad to an even number of bits on the MSB side.
    let padded: Vec<u32> = if n.len() % 2 == 1 {
        std::iter::once(0).chain(n.iter().copied()).collect()
    } else {
        n.to_vec()
    };
    // LSB-first working registers so they can grow at the top.
    let mut rem: Vec<u32> = Vec::new();
    let mut root: Vec<u32> = Vec::new();
    for pair in padded.chunks(2) {
        // rem = rem * 4 + pair; pair[0] is the more significant bit.
        rem.insert(0, pair[0]);
        rem.insert(0, pair[1]);
        // test = root * 4 + 1
        let mut test: Vec<u32> = vec![1, 0];
        test.extend(root.iter().copied());
        if ge_lsb(&rem, &test) {
            sub_lsb(&mut rem, &test);
            root.insert(0, 1);
        } else {
            root.insert(0, 0);
        }
    }
    debug_assert_eq!(root.len(), padded.len() / 2);
    let mut out: Vec<u32> = root.into_iter().take(out_len).collect();
    out.reverse();
    out
}

fn ge_lsb(a: &[u32], b: &[u32]) -> bool {
    let len = a.len().max(b.len());
    for i in (0..len).rev() {
        let av = a.get(i).copied().unwrap_or(0);
        let bv = b.get(i).copied().unwrap_or(0);
        if av != bv {
            return av > bv;
        }
    }
    true
}

/// a -= b, requires a >= b; both LSB-first.
fn sub_lsb(a: &mut Vec<u32>, b: &[u32]) {
    let mut borrow = 0i32;
    for i in 0..a.len().max(b.len()) {
        let av = a.get(i).copied().unwrap_or(0) as i32;
        let bv = b.get(i).copied().unwrap_or(0) as i32;
        let mut d = av - bv - borrow;
        borrow = 0;
        if d < 0 {
            d += 2;
            borrow = 1;
        }
        if i < a.len() {
            a[i] = d as u32;
        } else {
            debug_assert_eq!(d, 0);
        }
    }
    debug_assert_eq!(borrow, 0, "subtraction underflow");
}
