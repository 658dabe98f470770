//! Operator table shared by the reader and the printer.

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Assoc {
    Xfx,
    Xfy,
    Yfx,
}

#[derive(Clone, Copy, Debug)]
pub struct InfixOp {
    pub prec: u16,
    pub assoc: Assoc,
}

pub fn infix(name: &str) -> Option<InfixOp> {
    use Assoc::*;
    let (prec, assoc) = match name {
        ":-" | "-->" => (1200, Xfx),
        ";" => (1100, Xfy),
        "->" | "*->" => (1050, Xfy),
        "," => (1000, Xfy),
        "=" | "\\=" | "==" | "\\==" | "is" | "<" | ">" | "=<" | ">=" | "=:=" | "=\\=" | "=.." | "@<"
        | "@>" | "@=<" | "@>=" => (700, Xfx),
        "+" | "-" | "/\\" | "\\/" => (500, Yfx),
        "*" | "/" | "//" | "mod" | "rem" | "<<" | ">>" => (400, Yfx),
        "**" => (200, Xfx),
        "^" | ":" => (200, Xfy),
        _ => return None,
    };
    Some(InfixOp { prec, assoc })
}

/// Prefix operators: priority and the maximum priority of the operand.
pub fn prefix(name: &str) -> Option<(u16, u16)> {
    match name {
        ":-" | "?-" => Some((1200, 1199)),
        "\\+" => Some((900, 900)),
        "-" | "+" | "\\" => Some((200, 200)),
        _ => None,
    }
}
