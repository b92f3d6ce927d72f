#pragma once

// Syntax tree for the action-code language: the JavaScript subset that the
// sandbox executes and the safety analyzer inspects.

#include <memory>
#include <optional>
#include <string>
#include <vector>

namespace jitagent::script {

struct Pos {
    int line = 1;
    int column = 1;
};

enum class NodeKind {
    // expressions
    Number,
    String,
    Template,
    Boolean,
    Null,
    Identifier,
    This,
    Array,
    Object,
    Function,
    Member,
    Call,
    New,
    Unary,
    Update,
    Binary,
    Logical,
    Conditional,
    Assign,
    Sequence,
    Spread,
    Await,
    // patterns
    ObjectPattern,
    ArrayPattern,
    RestElement,
    AssignPattern,
    // statements
    VarDecl,
    FunctionDecl,
    Return,
    If,
    For,
    ForOf,
    ForIn,
    While,
    DoWhile,
    Break,
    Continue,
    Throw,
    Try,
    Block,
    ExprStmt,
    Empty,
    Switch,
    Program,
};

struct Node {
    explicit Node(NodeKind k, Pos p) : kind(k), pos(p) {}
    virtual ~Node() = default;
    Node(const Node&) = delete;
    Node& operator=(const Node&) = delete;

    NodeKind kind;
    Pos pos;
};

using NodePtr = std::unique_ptr<Node>;

template <class T>
const T& as(const Node& n) {
    return static_cast<const T&>(n);
}

struct NumberLit : Node {
    NumberLit(Pos p, double v) : Node(NodeKind::Number, p), value(v) {}
    double value;
};

struct StringLit : Node {
    StringLit(Pos p, std::string v) : Node(NodeKind::String, p), value(std::move(v)) {}
    std::string value;
};

// `a${x}b${y}c` → quasis {"a","b","c"}, exprs {x,y}
struct TemplateLit : Node {
    explicit TemplateLit(Pos p) : Node(NodeKind::Template, p) {}
    std::vector<std::string> quasis;
    std::vector<NodePtr> exprs;
};

struct BooleanLit : Node {
    BooleanLit(Pos p, bool v) : Node(NodeKind::Boolean, p), value(v) {}
    bool value;
};

struct NullLit : Node {
    explicit NullLit(Pos p) : Node(NodeKind::Null, p) {}
};

struct Identifier : Node {
    Identifier(Pos p, std::string n) : Node(NodeKind::Identifier, p), name(std::move(n)) {}
    std::string name;
};

struct ThisExpr : Node {
    explicit ThisExpr(Pos p) : Node(NodeKind::This, p) {}
};

struct ArrayLit : Node {
    explicit ArrayLit(Pos p) : Node(NodeKind::Array, p) {}
    std::vector<NodePtr> elements;  // may contain Spread
};

struct Property {
    std::string key;     // static key when !computed
    NodePtr computed_key;
    NodePtr value;       // null for spread-only entries
    bool spread = false; // `...expr` stored in value
    Pos pos;
};

struct ObjectLit : Node {
    explicit ObjectLit(Pos p) : Node(NodeKind::Object, p) {}
    std::vector<Property> props;
};

struct FunctionNode : Node {
    explicit FunctionNode(Pos p) : Node(NodeKind::Function, p) {}
    std::string name;
    std::vector<NodePtr> params;  // patterns (Identifier, ObjectPattern, ArrayPattern, AssignPattern, RestElement)
    NodePtr body;                 // Block, or an expression when expression_body
    bool arrow = false;
    bool expression_body = false;
    bool is_async = false;
};

struct MemberExpr : Node {
    explicit MemberExpr(Pos p) : Node(NodeKind::Member, p) {}
    NodePtr object;
    std::string property;  // when !computed
    NodePtr computed;      // when computed
    bool optional = false;
    bool is_computed() const { return computed != nullptr; }
};

struct CallExpr : Node {
    explicit CallExpr(Pos p, NodeKind k = NodeKind::Call) : Node(k, p) {}
    NodePtr callee;
    std::vector<NodePtr> args;  // may contain Spread
    bool optional = false;
};

struct UnaryExpr : Node {
    UnaryExpr(Pos p, std::string o, NodePtr a) : Node(NodeKind::Unary, p), op(std::move(o)), arg(std::move(a)) {}
    std::string op;
    NodePtr arg;
};

struct UpdateExpr : Node {
    UpdateExpr(Pos p, std::string o, bool pre, NodePtr a)
        : Node(NodeKind::Update, p), op(std::move(o)), prefix(pre), arg(std::move(a)) {}
    std::string op;
    bool prefix;
    NodePtr arg;
};

struct BinaryExpr : Node {
    BinaryExpr(Pos p, NodeKind k, std::string o, NodePtr l, NodePtr r)
        : Node(k, p), op(std::move(o)), left(std::move(l)), right(std::move(r)) {}
    std::string op;
    NodePtr left;
    NodePtr right;
};

struct ConditionalExpr : Node {
    explicit ConditionalExpr(Pos p) : Node(NodeKind::Conditional, p) {}
    NodePtr test, consequent, alternate;
};

struct AssignExpr : Node {
    AssignExpr(Pos p, std::string o, NodePtr t, NodePtr v)
        : Node(NodeKind::Assign, p), op(std::move(o)), target(std::move(t)), value(std::move(v)) {}
    std::string op;
    NodePtr target;
    NodePtr value;
};

struct SequenceExpr : Node {
    explicit SequenceExpr(Pos p) : Node(NodeKind::Sequence, p) {}
    std::vector<NodePtr> exprs;
};

struct SpreadExpr : Node {
    SpreadExpr(Pos p, NodePtr a) : Node(NodeKind::Spread, p), arg(std::move(a)) {}
    NodePtr arg;
};

struct AwaitExpr : Node {
    AwaitExpr(Pos p, NodePtr a) : Node(NodeKind::Await, p), arg(std::move(a)) {}
    NodePtr arg;
};

struct PatternProp {
    std::string key;
    NodePtr computed_key;
    NodePtr target;  // pattern
    Pos pos;
};

struct ObjectPattern : Node {
    explicit ObjectPattern(Pos p) : Node(NodeKind::ObjectPattern, p) {}
    std::vector<PatternProp> props;
    NodePtr rest;  // Identifier
};

struct ArrayPattern : Node {
    explicit ArrayPattern(Pos p) : Node(NodeKind::ArrayPattern, p) {}
    std::vector<NodePtr> elements;  // null entries are holes
};

struct RestElement : Node {
    RestElement(Pos p, NodePtr t) : Node(NodeKind::RestElement, p), target(std::move(t)) {}
    NodePtr target;
};

struct AssignPattern : Node {
    AssignPattern(Pos p, NodePtr t, NodePtr d)
        : Node(NodeKind::AssignPattern, p), target(std::move(t)), fallback(std::move(d)) {}
    NodePtr target;
    NodePtr fallback;
};

enum class DeclKind { Var, Let, Const };

struct Declarator {
    NodePtr target;  // pattern
    NodePtr init;
};

struct VarDecl : Node {
    VarDecl(Pos p, DeclKind k) : Node(NodeKind::VarDecl, p), decl_kind(k) {}
    DeclKind decl_kind;
    std::vector<Declarator> decls;
};

struct FunctionDecl : Node {
    FunctionDecl(Pos p, std::unique_ptr<FunctionNode> f) : Node(NodeKind::FunctionDecl, p), fn(std::move(f)) {}
    std::unique_ptr<FunctionNode> fn;
};

struct ReturnStmt : Node {
    explicit ReturnStmt(Pos p) : Node(NodeKind::Return, p) {}
    NodePtr arg;
};

struct IfStmt : Node {
    explicit IfStmt(Pos p) : Node(NodeKind::If, p) {}
    NodePtr test, consequent, alternate;
};

struct ForStmt : Node {
    explicit ForStmt(Pos p) : Node(NodeKind::For, p) {}
    NodePtr init, test, update, body;
};

// for (const x of xs) / for (const k in obj)
struct ForEachStmt : Node {
    ForEachStmt(Pos p, NodeKind k) : Node(k, p) {}
    std::optional<DeclKind> decl_kind;  // absent: assigns to an existing binding
    NodePtr target;
    NodePtr iterable;
    NodePtr body;
};

struct WhileStmt : Node {
    WhileStmt(Pos p, NodeKind k) : Node(k, p) {}
    NodePtr test, body;
};

struct JumpStmt : Node {
    JumpStmt(Pos p, NodeKind k) : Node(k, p) {}
};

struct ThrowStmt : Node {
    ThrowStmt(Pos p, NodePtr a) : Node(NodeKind::Throw, p), arg(std::move(a)) {}
    NodePtr arg;
};

struct TryStmt : Node {
    explicit TryStmt(Pos p) : Node(NodeKind::Try, p) {}
    NodePtr block;
    NodePtr param;  // optional pattern
    NodePtr handler;
    NodePtr finalizer;
};

struct BlockStmt : Node {
    explicit BlockStmt(Pos p, NodeKind k = NodeKind::Block) : Node(k, p) {}
    std::vector<NodePtr> body;
};

struct ExprStmt : Node {
    ExprStmt(Pos p, NodePtr e) : Node(NodeKind::ExprStmt, p), expr(std::move(e)) {}
    NodePtr expr;
};

struct EmptyStmt : Node {
    explicit EmptyStmt(Pos p) : Node(NodeKind::Empty, p) {}
};

struct SwitchCase {
    NodePtr test;  // null for default
    std::vector<NodePtr> body;
};

struct SwitchStmt : Node {
    explicit SwitchStmt(Pos p) : Node(NodeKind::Switch, p) {}
    NodePtr discriminant;
    std::vector<SwitchCase> cases;
};

using Program = BlockStmt;

}  // namespace jitagent::script
