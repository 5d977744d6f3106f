import java.io.*;

/**
 * Compiles many independent programs in one JVM. Reads "source<TAB>outdir"
 * lines from stdin and answers "ok" or "fail" per line; a failure leaves its
 * message in outdir/diagnostics.txt.
 */
class BatchCompile {
    public static void main(String[] args) throws Exception {
        BufferedReader in = new BufferedReader(new InputStreamReader(System.in, "UTF-8"));
        org.codehaus.commons.compiler.ICompilerFactory factory = new org.codehaus.janino.CompilerFactory();
        String line;
        while ((line = in.readLine()) != null) {
            int tab = line.indexOf('\t');
            File dir = new File(line.substring(tab + 1));
            try {
                org.codehaus.commons.compiler.ICompiler c = factory.newCompiler();
                c.setDestinationDirectory(dir, false);
                c.compile(new File[] { new File(line.substring(0, tab)) });
                System.out.println("ok");
            } catch (Throwable e) {
                Writer w = new OutputStreamWriter(new FileOutputStream(new File(dir, "diagnostics.txt")), "UTF-8");
                w.write(String.valueOf(e));
                w.close();
                System.out.println("fail");
            }
            System.out.flush();
        }
    }
}
