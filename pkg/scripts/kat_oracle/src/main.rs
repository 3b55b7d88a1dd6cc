//! Emits NIST-LWC-format known-answer files from third-party crates.
//!
//! usage: kat_oracle <out_dir>
//!
//! The xoodyak crate skips the Up/Down call for an empty plaintext, so rows
//! with an empty PT are not emitted for Xoodyak AEAD (see README.md).

use std::fmt::Write as _;
use std::fs;
use std::path::PathBuf;

use isap_aead::aead::{AeadInOut, KeyInit};
use isap_aead::IsapAscon128A;
use xoodyak::{Xoodoo, XoodyakCommon, XoodyakHash, XoodyakKeyed};

fn hex(b: &[u8]) -> String {
    b.iter().map(|x| format!("{:02X}", x)).collect()
}

fn seq(n: usize) -> Vec<u8> {
    (0..n).map(|i| i as u8).collect()
}

fn xoodyak_aead(key: &[u8], nonce: &[u8], ad: &[u8], pt: &[u8]) -> Vec<u8> {
    let mut st = XoodyakKeyed::new(key, None, None, None).unwrap();
    st.absorb(nonce);
    st.absorb(ad);
    let mut out = st.encrypt_to_vec(pt).unwrap();
    let mut tag = [0u8; 16];
    st.squeeze(&mut tag);
    out.extend_from_slice(&tag);
    out
}

fn isap_aead(key: &[u8], nonce: &[u8], ad: &[u8], pt: &[u8]) -> Vec<u8> {
    let cipher = IsapAscon128A::new(key.try_into().unwrap());
    let mut buf = pt.to_vec();
    let tag = cipher
        .encrypt_inout_detached(nonce.try_into().unwrap(), ad, buf.as_mut_slice().into())
        .unwrap();
    buf.extend_from_slice(&tag);
    buf
}

fn aead_file(f: fn(&[u8], &[u8], &[u8], &[u8]) -> Vec<u8>, skip_empty_pt: bool) -> String {
    let key = seq(16);
    let nonce = seq(16);
    let mut s = String::new();
    let mut count = 1;
    for mlen in 0..=32 {
        for adlen in 0..=32 {
            let pt = seq(mlen);
            let ad = seq(adlen);
            if !(skip_empty_pt && mlen == 0) {
                let ct = f(&key, &nonce, &ad, &pt);
                writeln!(s, "Count = {}", count).unwrap();
                writeln!(s, "Key = {}", hex(&key)).unwrap();
                writeln!(s, "Nonce = {}", hex(&nonce)).unwrap();
                writeln!(s, "PT = {}", hex(&pt)).unwrap();
                writeln!(s, "AD = {}", hex(&ad)).unwrap();
                writeln!(s, "CT = {}", hex(&ct)).unwrap();
                writeln!(s).unwrap();
            }
            count += 1;
        }
    }
    s
}

fn hash_file() -> String {
    let mut s = String::new();
    for mlen in 0..=1024 {
        let msg = seq(mlen);
        let mut st = XoodyakHash::new();
        st.absorb(&msg);
        let mut md = [0u8; 32];
        st.squeeze(&mut md);
        writeln!(s, "Count = {}", mlen + 1).unwrap();
        writeln!(s, "Msg = {}", hex(&msg)).unwrap();
        writeln!(s, "MD = {}", hex(&md)).unwrap();
        writeln!(s).unwrap();
    }
    s
}

fn xof(seed: &[u8], n: usize) -> Vec<u8> {
    let mut st = XoodyakHash::new();
    st.absorb(seed);
    let mut out = vec![0u8; n];
    st.squeeze(&mut out);
    out
}

fn extras() -> String {
    let key = seq(16);
    let mut st = XoodyakKeyed::new(&key, None, None, None).unwrap();
    st.absorb(&[]);
    let mut tag = [0u8; 16];
    st.squeeze(&mut tag);

    let mut st = XoodyakKeyed::new(&key, None, None, None).unwrap();
    st.absorb(b"swtee");
    let mut tag2 = [0u8; 16];
    st.squeeze(&mut tag2);

    // derive_key(shared = 00..1F, label, node_id = 00..0F, epoch = 1)
    let mut seed = seq(32);
    seed.extend_from_slice(b"session");
    seed.extend_from_slice(&seq(16));
    seed.extend_from_slice(&1u64.to_be_bytes());

    let mut s = String::new();
    writeln!(s, "mac_key_seq16_empty = {}", hex(&tag)).unwrap();
    writeln!(s, "mac_key_seq16_swtee = {}", hex(&tag2)).unwrap();
    writeln!(s, "xof_ab_16 = {}", hex(&xof(b"ab", 16))).unwrap();
    writeln!(s, "xof_ab_64 = {}", hex(&xof(b"ab", 64))).unwrap();
    writeln!(s, "derive_session_seq32_seq16_e1 = {}", hex(&xof(&seed, 16))).unwrap();
    s
}

fn main() {
    let out: PathBuf = std::env::args().nth(1).expect("usage: kat_oracle <out_dir>").into();
    fs::create_dir_all(&out).unwrap();
    fs::write(out.join("xoodyak_aead_nonempty_pt.txt"), aead_file(xoodyak_aead, true)).unwrap();
    fs::write(out.join("xoodyak_hash.txt"), hash_file()).unwrap();
    fs::write(out.join("isap_a_128a_aead.txt"), aead_file(isap_aead, false)).unwrap();

    fs::write(out.join("extras.txt"), extras()).unwrap();

    let mut x = Xoodoo::from_bytes([0u8; 48]);
    x.permute();
    let mut b = [0u8; 48];
    x.bytes(&mut b);
    fs::write(out.join("xoodoo_zero_12.txt"), format!("{}\n", hex(&b))).unwrap();
}
