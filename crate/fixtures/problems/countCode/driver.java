public class Main {
{{SUBMISSION}}

    public static void main(String[] args) throws Exception {
        java.io.BufferedReader in = new java.io.BufferedReader(new java.io.InputStreamReader(System.in));
        String str = Lit.parseText(Lit.line(in));
        System.out.println(Lit.render(new Main().countCode(str)));
    }
}

/** Literal codec shared by the driver: integers, booleans, "text", [int, ...]. */
class Lit {
    static String line(java.io.BufferedReader in) throws java.io.IOException {
        String s = in.readLine();
        if (s == null) throw new IllegalArgumentException("missing argument line");
        return s.trim();
    }

    static int parseInt(String s) {
        return Integer.parseInt(s.startsWith("+") ? s.substring(1) : s);
    }

    static boolean parseBoolean(String s) {
        if (s.equals("true")) return true;
        if (s.equals("false")) return false;
        throw new IllegalArgumentException("bad boolean literal: " + s);
    }

    static String parseText(String s) {
        if (s.length() < 2 || s.charAt(0) != '"' || s.charAt(s.length() - 1) != '"') {
            throw new IllegalArgumentException("bad text literal: " + s);
        }
        StringBuilder out = new StringBuilder();
        for (int i = 1; i < s.length() - 1; i++) {
            char c = s.charAt(i);
            if (c == '\\') {
                i++;
                char e = s.charAt(i);
                if (e == 'n') out.append('\n');
                else if (e == 't') out.append('\t');
                else if (e == 'r') out.append('\r');
                else out.append(e);
            } else {
                out.append(c);
            }
        }
        return out.toString();
    }

    static int[] parseIntArray(String s) {
        String body = s.substring(1, s.length() - 1).trim();
        if (body.length() == 0) return new int[0];
        String[] parts = body.split(",");
        int[] out = new int[parts.length];
        for (int i = 0; i < parts.length; i++) out[i] = parseInt(parts[i].trim());
        return out;
    }

    static String render(int v) {
        return Integer.toString(v);
    }

    static String render(boolean v) {
        return v ? "true" : "false";
    }

    static String render(String v) {
        StringBuilder out = new StringBuilder("\"");
        for (int i = 0; i < v.length(); i++) {
            char c = v.charAt(i);
            if (c == '"') out.append("\\\"");
            else if (c == '\\') out.append("\\\\");
            else if (c == '\n') out.append("\\n");
            else if (c == '\t') out.append("\\t");
            else if (c == '\r') out.append("\\r");
            else out.append(c);
        }
        return out.append('"').toString();
    }

    static String render(int[] v) {
        StringBuilder out = new StringBuilder("[");
        for (int i = 0; i < v.length; i++) {
            if (i > 0) out.append(", ");
            out.append(v[i]);
        }
        return out.append(']').toString();
    }
}
