use std::fmt;

/// Instruction kinds understood by the core. Everything else is `Illegal`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Kind {
    Addi,
    Add,
    Sub,
    Lw,
    Sw,
    Lui,
    Blt,
    Bge,
    Bne,
    Jal,
    Nop,
    Illegal,
}

/// A decoded RV32I instruction from the supported subset.
///
/// Immediates are sign-extended byte values, except `Lui` whose `imm` holds
/// the already-shifted upper 20 bits.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Instruction {
    Addi { rd: u8, rs1: u8, imm: i32 },
    Add { rd: u8, rs1: u8, rs2: u8 },
    Sub { rd: u8, rs1: u8, rs2: u8 },
    Lw { rd: u8, rs1: u8, imm: i32 },
    Sw { rs1: u8, rs2: u8, imm: i32 },
    Lui { rd: u8, imm: i32 },
    Blt { rs1: u8, rs2: u8, imm: i32 },
    Bge { rs1: u8, rs2: u8, imm: i32 },
    Bne { rs1: u8, rs2: u8, imm: i32 },
    Jal { rd: u8, imm: i32 },
    Nop,
    Illegal(u32),
}

pub const NOP_WORD: u32 = 0x0000_0013;

const OP_IMM: u32 = 0x13;
const OP: u32 = 0x33;
const LOAD: u32 = 0x03;
const STORE: u32 = 0x23;
const LUI: u32 = 0x37;
const BRANCH: u32 = 0x63;
const JAL: u32 = 0x6f;

fn rd(w: u32) -> u8 {
    ((w >> 7) & 0x1f) as u8
}
fn rs1(w: u32) -> u8 {
    ((w >> 15) & 0x1f) as u8
}
fn rs2(w: u32) -> u8 {
    ((w >> 20) & 0x1f) as u8
}
fn funct3(w: u32) -> u32 {
    (w >> 12) & 0x7
}

fn imm_i(w: u32) -> i32 {
    (w as i32) >> 20
}
fn imm_s(w: u32) -> i32 {
    (((w as i32) >> 25) << 5) | ((w >> 7) & 0x1f) as i32
}
fn imm_b(w: u32) -> i32 {
    (((w as i32) >> 31) << 12)
        | (((w >> 7) & 1) << 11) as i32
        | (((w >> 25) & 0x3f) << 5) as i32
        | (((w >> 8) & 0xf) << 1) as i32
}
fn imm_j(w: u32) -> i32 {
    (((w as i32) >> 31) << 20)
        | (w & 0x000f_f000) as i32
        | (((w >> 20) & 1) << 11) as i32
        | (((w >> 21) & 0x3ff) << 1) as i32
}

fn enc_r(funct7: u32, rs2: u8, rs1: u8, f3: u32, rd: u8, op: u32) -> u32 {
    (funct7 << 25) | ((rs2 as u32) << 20) | ((rs1 as u32) << 15) | (f3 << 12) | ((rd as u32) << 7) | op
}
fn enc_i(imm: i32, rs1: u8, f3: u32, rd: u8, op: u32) -> u32 {
    (((imm as u32) & 0xfff) << 20) | ((rs1 as u32) << 15) | (f3 << 12) | ((rd as u32) << 7) | op
}
fn enc_s(imm: i32, rs2: u8, rs1: u8, f3: u32, op: u32) -> u32 {
    let imm = imm as u32;
    (((imm >> 5) & 0x7f) << 25)
        | ((rs2 as u32) << 20)
        | ((rs1 as u32) << 15)
        | (f3 << 12)
        | ((imm & 0x1f) << 7)
        | op
}
fn enc_b(imm: i32, rs2: u8, rs1: u8, f3: u32) -> u32 {
    let imm = imm as u32;
    (((imm >> 12) & 1) << 31)
        | (((imm >> 5) & 0x3f) << 25)
        | ((rs2 as u32) << 20)
        | ((rs1 as u32) << 15)
        | (f3 << 12)
        | (((imm >> 1) & 0xf) << 8)
        | (((imm >> 11) & 1) << 7)
        | BRANCH
}
fn enc_j(imm: i32, rd: u8) -> u32 {
    let imm = imm as u32;
    (((imm >> 20) & 1) << 31)
        | (((imm >> 1) & 0x3ff) << 21)
        | (((imm >> 11) & 1) << 20)
        | (imm & 0x000f_f000)
        | ((rd as u32) << 7)
        | JAL
}

/// Decode a 32-bit word. Total: unknown encodings become `Illegal`.
pub fn decode(w: u32) -> Instruction {
    use Instruction::*;
    if w == NOP_WORD {
        return Nop;
    }
    match w & 0x7f {
        OP_IMM if funct3(w) == 0 => Addi {
            rd: rd(w),
            rs1: rs1(w),
            imm: imm_i(w),
        },
        OP if funct3(w) == 0 && w >> 25 == 0 => Add {
            rd: rd(w),
            rs1: rs1(w),
            rs2: rs2(w),
        },
        OP if funct3(w) == 0 && w >> 25 == 0x20 => Sub {
            rd: rd(w),
            rs1: rs1(w),
            rs2: rs2(w),
        },
        LOAD if funct3(w) == 2 => Lw {
            rd: rd(w),
            rs1: rs1(w),
            imm: imm_i(w),
        },
        STORE if funct3(w) == 2 => Sw {
            rs1: rs1(w),
            rs2: rs2(w),
            imm: imm_s(w),
        },
        LUI => Lui {
            rd: rd(w),
            imm: (w & 0xffff_f000) as i32,
        },
        BRANCH => {
            let (rs1, rs2, imm) = (rs1(w), rs2(w), imm_b(w));
            match funct3(w) {
                1 => Bne { rs1, rs2, imm },
                4 => Blt { rs1, rs2, imm },
                5 => Bge { rs1, rs2, imm },
                _ => Illegal(w),
            }
        }
        JAL => Jal {
            rd: rd(w),
            imm: imm_j(w),
        },
        _ => Illegal(w),
    }
}

impl Instruction {
    pub fn kind(&self) -> Kind {
        match self {
            Instruction::Addi { .. } => Kind::Addi,
            Instruction::Add { .. } => Kind::Add,
            Instruction::Sub { .. } => Kind::Sub,
            Instruction::Lw { .. } => Kind::Lw,
            Instruction::Sw { .. } => Kind::Sw,
            Instruction::Lui { .. } => Kind::Lui,
            Instruction::Blt { .. } => Kind::Blt,
            Instruction::Bge { .. } => Kind::Bge,
            Instruction::Bne { .. } => Kind::Bne,
            Instruction::Jal { .. } => Kind::Jal,
            Instruction::Nop => Kind::Nop,
            Instruction::Illegal(_) => Kind::Illegal,
        }
    }

    /// Encode back to a machine word.
    ///
    /// Immediates are truncated to their field width; a well-formed
    /// instruction (in-range, even branch offsets) round-trips through
    /// [`decode`].
    pub fn encode(&self) -> u32 {
        match *self {
            Instruction::Addi { rd, rs1, imm } => enc_i(imm, rs1, 0, rd, OP_IMM),
            Instruction::Add { rd, rs1, rs2 } => enc_r(0, rs2, rs1, 0, rd, OP),
            Instruction::Sub { rd, rs1, rs2 } => enc_r(0x20, rs2, rs1, 0, rd, OP),
            Instruction::Lw { rd, rs1, imm } => enc_i(imm, rs1, 2, rd, LOAD),
            Instruction::Sw { rs1, rs2, imm } => enc_s(imm, rs2, rs1, 2, STORE),
            Instruction::Lui { rd, imm } => ((imm as u32) & 0xffff_f000) | ((rd as u32) << 7) | LUI,
            Instruction::Blt { rs1, rs2, imm } => enc_b(imm, rs2, rs1, 4),
            Instruction::Bge { rs1, rs2, imm } => enc_b(imm, rs2, rs1, 5),
            Instruction::Bne { rs1, rs2, imm } => enc_b(imm, rs2, rs1, 1),
            Instruction::Jal { rd, imm } => enc_j(imm, rd),
            Instruction::Nop => NOP_WORD,
            Instruction::Illegal(w) => w,
        }
    }

    pub fn is_branch(&self) -> bool {
        matches!(
            self,
            Instruction::Blt { .. } | Instruction::Bge { .. } | Instruction::Bne { .. }
        )
    }

    /// Registers read by this instruction (x0 reads included).
    pub fn sources(&self) -> [Option<u8>; 2] {
        match *self {
            Instruction::Addi { rs1, .. } | Instruction::Lw { rs1, .. } => [Some(rs1), None],
            Instruction::Add { rs1, rs2, .. }
            | Instruction::Sub { rs1, rs2, .. }
            | Instruction::Sw { rs1, rs2, .. }
            | Instruction::Blt { rs1, rs2, .. }
            | Instruction::Bge { rs1, rs2, .. }
            | Instruction::Bne { rs1, rs2, .. } => [Some(rs1), Some(rs2)],
            _ => [None, None],
        }
    }
}

/// ABI register name.
pub fn reg_name(r: u8) -> &'static str {
    const NAMES: [&str; 32] = [
        "zero", "ra", "sp", "gp", "tp", "t0", "t1", "t2", "s0", "s1", "a0", "a1", "a2", "a3", "a4",
        "a5", "a6", "a7", "s2", "s3", "s4", "s5", "s6", "s7", "s8", "s9", "s10", "s11", "t3", "t4",
        "t5", "t6",
    ];
    NAMES[(r & 0x1f) as usize]
}

impl fmt::Display for Instruction {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let n = reg_name;
        match *self {
            Instruction::Addi { rd, rs1, imm } => write!(f, "addi {}, {}, {}", n(rd), n(rs1), imm),
            Instruction::Add { rd, rs1, rs2 } => write!(f, "add {}, {}, {}", n(rd), n(rs1), n(rs2)),
            Instruction::Sub { rd, rs1, rs2 } => write!(f, "sub {}, {}, {}", n(rd), n(rs1), n(rs2)),
            Instruction::Lw { rd, rs1, imm } => write!(f, "lw {}, {}({})", n(rd), imm, n(rs1)),
            Instruction::Sw { rs1, rs2, imm } => write!(f, "sw {}, {}({})", n(rs2), imm, n(rs1)),
            Instruction::Lui { rd, imm } => write!(f, "lui {}, 0x{:x}", n(rd), (imm as u32) >> 12),
            Instruction::Blt { rs1, rs2, imm } => write!(f, "blt {}, {}, {}", n(rs1), n(rs2), imm),
            Instruction::Bge { rs1, rs2, imm } => write!(f, "bge {}, {}, {}", n(rs1), n(rs2), imm),
            Instruction::Bne { rs1, rs2, imm } => write!(f, "bne {}, {}, {}", n(rs1), n(rs2), imm),
            Instruction::Jal { rd, imm } => write!(f, "jal {}, {}", n(rd), imm),
            Instruction::Nop => write!(f, "nop"),
            Instruction::Illegal(w) => write!(f, ".word 0x{w:08x}"),
        }
    }
}
