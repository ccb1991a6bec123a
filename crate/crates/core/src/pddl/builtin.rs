use super::{ActionSchema, Atom, Domain, Literal, LiteralGroup, PredicateDecl, TypedName};

pub const BLOCKWORLD_DOMAIN: &str = "blockworld";
pub const HAND: &str = "hand";
pub const AIR: &str = "air";

fn pos(p: &str, a: &str, b: &str) -> Literal {
    Literal::Pos(Atom::binary(p, a, b))
}

fn neg(p: &str, a: &str, b: &str) -> Literal {
    Literal::Neg(Atom::binary(p, a, b))
}

fn group(comment: &str, literals: Vec<Literal>) -> LiteralGroup {
    LiteralGroup::new(Some(comment), literals)
}

/// The pick/place domain over the object-centered predicates `in`, `on`
/// and `under`, with `hand` and `air` as constants.
pub fn builtin_blockworld_domain() -> Domain {
    let params = vec![TypedName::object("?obj"), TypedName::object("?surface")];
    let pick = ActionSchema {
        name: "pick".into(),
        parameters: params.clone(),
        precondition: vec![
            group("collision-free constraints:", vec![pos("in", HAND, AIR), pos("on", "?obj", AIR)]),
            group("object is on a surface:", vec![pos("on", "?surface", "?obj"), pos("under", "?obj", "?surface")]),
        ],
        effect: vec![
            group("hand contains target object:", vec![pos("in", HAND, "?obj"), neg("in", HAND, AIR)]),
            group(
                "object has been grasped:",
                vec![pos("on", "?obj", HAND), pos("under", "?obj", AIR), neg("on", "?obj", AIR)],
            ),
            group(
                "nothing is on surface:",
                vec![neg("on", "?surface", "?obj"), neg("under", "?obj", "?surface"), pos("on", "?surface", AIR)],
            ),
        ],
    };
    let place = ActionSchema {
        name: "place".into(),
        parameters: params,
        precondition: vec![
            group("collision-free constraints:", vec![pos("on", "?surface", AIR), pos("under", "?obj", AIR)]),
            group("hand contains object:", vec![pos("in", HAND, "?obj"), pos("on", "?obj", HAND)]),
        ],
        effect: vec![
            group("hand no longer contains object:", vec![pos("in", HAND, AIR), neg("in", HAND, "?obj")]),
            group(
                "object is on surface:",
                vec![
                    pos("on", "?surface", "?obj"),
                    neg("on", "?surface", AIR),
                    pos("under", "?obj", "?surface"),
                    neg("under", "?obj", AIR),
                ],
            ),
            group("nothing is on object:", vec![neg("on", "?obj", HAND), pos("on", "?obj", AIR)]),
        ],
    };
    let binary = |name: &str| PredicateDecl {
        name: name.into(),
        params: vec![TypedName::object("?obj_1"), TypedName::object("?obj_2")],
    };
    Domain {
        name: BLOCKWORLD_DOMAIN.into(),
        requirements: vec![":strips".into(), ":typing".into()],
        types: Vec::new(),
        constants: vec![TypedName::object(HAND), TypedName::object(AIR)],
        predicates: vec![binary("in"), binary("on"), binary("under")],
        actions: vec![pick, place],
    }
}
